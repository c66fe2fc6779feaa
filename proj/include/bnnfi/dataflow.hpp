#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "bnnfi/bits.hpp"
#include "bnnfi/network.hpp"

namespace bnnfi {

/// Fixed register vocabulary. The order here is also the per-layer enumeration order.
enum class RegisterRole : std::uint8_t {
  State,
  NeuronFoldCounter,
  SynapseFoldCounter,
  WeightAddr,
  PeAccumulator,
  InputWindow,
  OutputAssembly,
  FifoCount,
};

std::string_view role_name(RegisterRole role) noexcept;

struct RegisterDescriptor {
  std::size_t reg_id = 0;
  std::size_t layer_id = 0;
  RegisterRole role = RegisterRole::State;
  /// PE index for accumulators, 0 otherwise.
  std::size_t index = 0;
  std::size_t width = 0;

  /// "L0.weight_addr", "L1.pe_accumulator[3]", ...
  std::string label() const;
};

/// Encodings held in the 2-bit state register. Code 3 is illegal and latches HANG.
enum class FsmPhase : std::uint32_t { Idle = 0, Compute = 1, Done = 2 };

inline constexpr std::size_t kStateBits = 2;
inline constexpr std::size_t kWeightAddrBits = 32;

enum class RunStatus { Completed, Timeout, Hang };

struct RunResult {
  RunStatus status = RunStatus::Timeout;
  ClassScores scores;
  /// Cycles executed (the completion cycle for completed runs).
  std::size_t latency = 0;

  bool completed() const noexcept { return status == RunStatus::Completed; }
};

/// A single-bit upset applied right before the state update of `cycle` (1-based).
struct BitFlip {
  std::size_t reg_id = 0;
  std::size_t bit = 0;
  std::size_t cycle = 1;
};

/// One layer's activity in one cycle (a datapath accumulation or an output push).
struct TraceEntry {
  std::size_t cycle = 0;
  std::size_t layer = 0;
  FsmPhase phase = FsmPhase::Idle;
  std::size_t neuron_fold = 0;
  std::size_t synapse_fold = 0;
  /// Weight address used by the accumulation this cycle, if one happened.
  std::optional<std::uint32_t> weight_addr;
};

/// Writes `cycle,layer,fsm_phase,neuron_fold,synapse_fold` lines (no header).
void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace);

struct LayerWindow {
  std::size_t layer_id = 0;
  std::size_t start_cycle = 0;
  std::size_t end_cycle = 0;

  friend bool operator==(const LayerWindow&, const LayerWindow&) = default;
};

struct Phase {
  std::size_t start_cycle = 0;
  std::size_t end_cycle = 0;
  std::vector<std::size_t> active_layers;

  friend bool operator==(const Phase&, const Phase&) = default;
};

struct PhaseTable {
  std::vector<Phase> phases;

  /// Index of the phase containing `cycle`, if any.
  std::optional<std::size_t> phase_of(std::size_t cycle) const noexcept;

  friend bool operator==(const PhaseTable&, const PhaseTable&) = default;
};

/// Phases start at every distinct layer start cycle (the first one is extended back to
/// cycle 1) and the last ends at `total_latency` (0 means the latest window end). A layer
/// is active in a phase when it starts at the phase's first cycle, or started earlier and
/// its window end lies strictly after that first cycle.
PhaseTable phase_table(const std::vector<LayerWindow>& windows, std::size_t total_latency = 0);

/// Default FIFO depth (in bits) for the edge feeding layer `edge + 1`: twice the larger of
/// the producer's PE count and the consumer's SIMD width.
std::vector<std::size_t> default_fifo_depths(const NetworkTopology& topology);

/// Cycle-level model of the folded streaming pipeline.
///
/// Each layer owns an FSM with a 2-bit state register, neuron/synapse fold counters, a
/// free-running 32-bit weight address, one accumulator per PE, an input buffer register
/// (`input_window`, filled during the first neuron fold and replayed afterwards) and an
/// output assembly register. Hidden layers stage PE activation bits plus a valid bit in
/// the output assembly and push them into the next layer's input FIFO one cycle later;
/// the output layer writes raw match counts into its bank of 32-bit score registers.
/// Every layer except the first owns the occupancy counter of its input FIFO; the FIFO
/// payload itself is storage and is not a fault target.
///
/// Layers are updated from last to first every cycle, so data pushed in cycle t is
/// visible to the consumer in cycle t + 1. Weight memory decodes the full 32-bit address
/// and returns an all-zero word for any address at or beyond its depth.
/// The run completes in the cycle the output layer reaches Done.
///
/// The simulator keeps a pointer to the model; the model must outlive it. Copies are cheap
/// enough to serve as snapshots.
class Simulator {
 public:
  explicit Simulator(const Model& model, std::vector<std::size_t> fifo_depths = {});

  /// Resets every register to zero and installs a new input vector (cycle 0).
  void load_input(const BitVector& input);

  /// Advances one clock cycle. No-op once complete or hung.
  void step();

  /// Runs until completion, hang, or `cycle_budget` total cycles; applies `flip` before
  /// the state update of its cycle when it is reached.
  RunResult run(std::size_t cycle_budget, std::optional<BitFlip> flip = std::nullopt);

  bool complete() const noexcept { return complete_; }
  bool hung() const noexcept { return hung_; }
  std::size_t cycle() const noexcept { return cycle_; }

  const std::vector<RegisterDescriptor>& registers() const noexcept { return registers_; }
  std::size_t total_register_bits() const noexcept { return total_bits_; }
  /// Register id of a named register; throws ContractError if absent.
  std::size_t find_register(std::size_t layer, RegisterRole role, std::size_t index = 0) const;

  void flip_bit(std::size_t reg_id, std::size_t bit);
  bool read_bit(std::size_t reg_id, std::size_t bit) const;
  /// Value of a register up to 64 bits wide.
  std::uint64_t read_register(std::size_t reg_id) const;

  ClassScores scores() const;

  /// First/last active cycle per layer; requires a completed run.
  std::vector<LayerWindow> layer_windows() const;

  void enable_trace(bool on) noexcept { trace_enabled_ = on; }
  const std::vector<TraceEntry>& trace() const noexcept { return trace_; }

  const Model& model() const noexcept { return *model_; }
  const std::vector<std::size_t>& fifo_depths() const noexcept { return fifo_depths_; }

  /// Snapshot equality over every register, FIFO payload and status flag.
  bool same_state(const Simulator& other) const;

 private:
  struct LayerState {
    std::uint32_t state = 0;
    std::uint32_t neuron_fold = 0;
    std::uint32_t synapse_fold = 0;
    std::uint32_t weight_addr = 0;
    std::vector<std::uint32_t> acc;
    BitVector input_window;
    std::uint64_t out_assembly = 0;
    std::vector<std::uint32_t> score_bank;
    std::uint32_t fifo_count = 0;
    std::vector<std::uint8_t> fifo_payload;
    std::size_t first_active = 0;
    std::size_t last_active = 0;

    bool operator==(const LayerState&) const = default;
  };

  struct LayerGeometry {
    std::size_t nf_bits = 1;
    std::size_t sf_bits = 1;
    std::size_t acc_bits = 1;
    std::size_t fifo_count_bits = 0;
    std::size_t first_reg = 0;
  };

  void step_layer(std::size_t l);
  std::uint64_t weight_word(std::size_t l, std::size_t pe, std::uint32_t addr) const;
  bool fifo_pop(std::size_t consumer, std::size_t count, std::uint64_t& bits);
  bool fifo_can_push(std::size_t consumer, std::size_t count) const;
  void fifo_push(std::size_t consumer, std::size_t count, std::uint64_t bits);

  const Model* model_ = nullptr;
  std::vector<std::size_t> fifo_depths_;
  std::vector<LayerGeometry> geometry_;
  std::vector<RegisterDescriptor> registers_;
  std::size_t total_bits_ = 0;

  BitVector input_;
  std::vector<LayerState> layers_;
  std::size_t cycle_ = 0;
  bool complete_ = false;
  bool hung_ = false;
  bool trace_enabled_ = false;
  std::vector<TraceEntry> trace_;
};

/// Loads `input` and runs for at most `cycle_budget` cycles.
RunResult run_to_completion(Simulator& sim, const BitVector& input, std::size_t cycle_budget);

}  // namespace bnnfi
