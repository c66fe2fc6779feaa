#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "bnnfi/dataflow.hpp"
#include "bnnfi/network.hpp"

namespace bnnfi {

struct TransientFault {
  std::size_t reg_id = 0;
  std::size_t bit = 0;
  std::size_t cycle = 1;
  friend bool operator==(const TransientFault&, const TransientFault&) = default;
};

struct WeightBitFault {
  std::size_t layer = 0;
  std::size_t flat_bit = 0;
  friend bool operator==(const WeightBitFault&, const WeightBitFault&) = default;
};

struct ThresholdBitFault {
  std::size_t layer = 0;
  std::size_t neuron = 0;
  std::size_t bit = 0;
  friend bool operator==(const ThresholdBitFault&, const ThresholdBitFault&) = default;
};

using FaultTarget = std::variant<TransientFault, WeightBitFault, ThresholdBitFault>;

struct FaultDescriptor {
  std::uint64_t fault_uid = 0;
  FaultTarget target;

  bool transient() const noexcept { return std::holds_alternative<TransientFault>(target); }
  friend bool operator==(const FaultDescriptor&, const FaultDescriptor&) = default;
};

enum class SpaceKind { Transient, Persistent };
std::string_view space_name(SpaceKind kind) noexcept;

/// Every (register bit, cycle) pair of a run. uid order is (reg_id, bit, cycle) lexicographic.
class TransientSpace {
 public:
  TransientSpace(std::vector<RegisterDescriptor> registers, std::size_t run_length);

  std::uint64_t size() const noexcept { return total_bits_ * run_length_; }
  std::size_t run_length() const noexcept { return run_length_; }
  std::size_t total_bits() const noexcept { return total_bits_; }
  const std::vector<RegisterDescriptor>& registers() const noexcept { return registers_; }

  FaultDescriptor at(std::uint64_t uid) const;
  std::uint64_t uid_of(const TransientFault& f) const;
  std::size_t layer_of(const TransientFault& f) const;

 private:
  std::vector<RegisterDescriptor> registers_;
  std::vector<std::size_t> bit_offset_;
  std::size_t total_bits_ = 0;
  std::size_t run_length_ = 0;
};

/// Every model parameter bit: per layer, the weight bits in flat order followed by the
/// threshold bits of hidden layers (neuron-major, accumulator width bits each).
class PersistentSpace {
 public:
  explicit PersistentSpace(const NetworkTopology& topology);

  std::uint64_t size() const noexcept { return total_; }
  FaultDescriptor at(std::uint64_t uid) const;
  std::uint64_t uid_of(const FaultTarget& target) const;
  static std::size_t layer_of(const FaultTarget& target) noexcept;

 private:
  struct Segment {
    std::uint64_t weight_begin = 0;
    std::uint64_t threshold_begin = 0;
    std::uint64_t end = 0;
    std::size_t cols = 0;
    std::size_t neurons = 0;
    std::size_t threshold_bits = 0;
  };
  std::vector<Segment> segments_;
  std::uint64_t total_ = 0;
};

TransientSpace enumerate_transient_space(const Simulator& sim, std::size_t run_length);
PersistentSpace enumerate_persistent_space(const Model& model);

/// Two-sided normal quantile for 0.90 / 0.95 / 0.99; ConfigError otherwise.
double confidence_quantile(double confidence);

/// n = N / (1 + e^2 (N - 1) / (t^2 p (1 - p))), rounded up and clamped to [1, N].
std::uint64_t sample_size(std::uint64_t population, double confidence, double margin,
                          double p = 0.5);

/// n distinct uids from [0, N), uniform without replacement, returned in ascending order.
std::vector<std::uint64_t> draw_sample(std::uint64_t population, std::uint64_t n,
                                       std::uint64_t seed);

enum class Outcome { Masked, MsbOnly, Tolerable, Critical, Crash };
inline constexpr std::size_t kOutcomeCount = 5;
std::string_view outcome_name(Outcome o) noexcept;
Outcome parse_outcome(std::string_view name);

enum class ArgmaxMode { Masked, Raw };

/// Crash for timeouts and hangs; otherwise compares the raw and the low-bit-window scores.
Outcome classify(const ClassScores& golden, const RunResult& result, std::size_t useful_lsb_bits,
                 ArgmaxMode mode = ArgmaxMode::Masked);

/// Class reported for a score vector under the given argmax mode.
std::size_t decide_class(const ClassScores& scores, std::size_t useful_lsb_bits, ArgmaxMode mode);

/// Fault-free reference for one input, with a state snapshot before every cycle so
/// transient injections can start from the golden prefix.
struct GoldenRun {
  BitVector input;
  ClassScores scores;
  std::size_t latency = 0;
  std::vector<LayerWindow> windows;
  std::vector<std::size_t> fifo_depths;
  /// snapshots[t] is the simulator after t cycles (t = 0 .. latency - 1).
  std::vector<Simulator> snapshots;
};

GoldenRun compute_golden(const Model& model, const BitVector& input,
                         std::vector<std::size_t> fifo_depths = {}, bool keep_snapshots = true);

struct RunRecord {
  FaultDescriptor fault;
  std::size_t input_index = 0;
  Outcome outcome = Outcome::Masked;
  std::size_t golden_class = 0;
  std::optional<std::size_t> observed_class;
  std::size_t latency = 0;
  std::size_t layer = 0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct InjectionOptions {
  double budget_factor = 2.0;
  ArgmaxMode argmax = ArgmaxMode::Masked;
};

std::size_t cycle_budget(std::size_t golden_latency, double budget_factor);

/// Runs one injection against `golden`. Transient faults replay from the golden snapshot
/// of the previous cycle; persistent faults flip the bit in `model`, run a fresh
/// simulator and restore the bit before returning. `golden` must have been computed on
/// `model` (the same object or a bit-identical copy).
RunRecord inject_and_run(Model& model, const GoldenRun& golden, const FaultDescriptor& fault,
                         std::size_t input_index, const InjectionOptions& options = {});

/// Applies a persistent fault to the model parameters (an involution).
void flip_parameter(Model& model, const FaultTarget& target);

}  // namespace bnnfi
