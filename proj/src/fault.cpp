#include "bnnfi/fault.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "bnnfi/error.hpp"
#include "bnnfi/random.hpp"

namespace bnnfi {

std::string_view space_name(SpaceKind kind) noexcept {
  return kind == SpaceKind::Transient ? "transient" : "persistent";
}

TransientSpace::TransientSpace(std::vector<RegisterDescriptor> registers, std::size_t run_length)
    : registers_(std::move(registers)), run_length_(run_length) {
  for (const auto& r : registers_) {
    bit_offset_.push_back(total_bits_);
    total_bits_ += r.width;
  }
}

FaultDescriptor TransientSpace::at(std::uint64_t uid) const {
  if (uid >= size()) throw ContractError("TransientSpace::at: uid out of range");
  const std::uint64_t flat_bit = uid / run_length_;
  const std::size_t cycle = static_cast<std::size_t>(uid % run_length_) + 1;
  auto it = std::upper_bound(bit_offset_.begin(), bit_offset_.end(), flat_bit);
  const auto reg = static_cast<std::size_t>(std::distance(bit_offset_.begin(), it) - 1);
  return FaultDescriptor{uid, TransientFault{reg, static_cast<std::size_t>(flat_bit - bit_offset_[reg]), cycle}};
}

std::uint64_t TransientSpace::uid_of(const TransientFault& f) const {
  if (f.reg_id >= registers_.size() || f.bit >= registers_[f.reg_id].width || f.cycle == 0 ||
      f.cycle > run_length_) {
    throw ContractError("TransientSpace::uid_of: descriptor outside the space");
  }
  return (std::uint64_t{bit_offset_[f.reg_id]} + f.bit) * run_length_ + (f.cycle - 1);
}

std::size_t TransientSpace::layer_of(const TransientFault& f) const {
  if (f.reg_id >= registers_.size()) throw ContractError("TransientSpace::layer_of: bad reg_id");
  return registers_[f.reg_id].layer_id;
}

PersistentSpace::PersistentSpace(const NetworkTopology& topology) {
  for (const auto& spec : topology.layers) {
    Segment s;
    s.weight_begin = total_;
    s.cols = spec.in_features;
    s.threshold_begin = s.weight_begin + std::uint64_t{spec.out_features} * spec.in_features;
    s.neurons = spec.is_output ? 0 : spec.out_features;
    s.threshold_bits = spec.is_output ? 0 : spec.accumulator_bits();
    s.end = s.threshold_begin + std::uint64_t{s.neurons} * s.threshold_bits;
    total_ = s.end;
    segments_.push_back(s);
  }
}

FaultDescriptor PersistentSpace::at(std::uint64_t uid) const {
  if (uid >= total_) throw ContractError("PersistentSpace::at: uid out of range");
  for (std::size_t l = 0; l < segments_.size(); ++l) {
    const auto& s = segments_[l];
    if (uid >= s.end) continue;
    if (uid < s.threshold_begin) {
      return FaultDescriptor{uid, WeightBitFault{l, static_cast<std::size_t>(uid - s.weight_begin)}};
    }
    const std::uint64_t off = uid - s.threshold_begin;
    return FaultDescriptor{uid, ThresholdBitFault{l, static_cast<std::size_t>(off / s.threshold_bits),
                                                  static_cast<std::size_t>(off % s.threshold_bits)}};
  }
  throw ContractError("PersistentSpace::at: uid out of range");
}

std::uint64_t PersistentSpace::uid_of(const FaultTarget& target) const {
  if (const auto* w = std::get_if<WeightBitFault>(&target)) {
    if (w->layer < segments_.size()) {
      const auto& s = segments_[w->layer];
      if (w->flat_bit < s.threshold_begin - s.weight_begin) return s.weight_begin + w->flat_bit;
    }
  } else if (const auto* t = std::get_if<ThresholdBitFault>(&target)) {
    if (t->layer < segments_.size()) {
      const auto& s = segments_[t->layer];
      if (t->neuron < s.neurons && t->bit < s.threshold_bits) {
        return s.threshold_begin + std::uint64_t{t->neuron} * s.threshold_bits + t->bit;
      }
    }
  }
  throw ContractError("PersistentSpace::uid_of: descriptor outside the space");
}

std::size_t PersistentSpace::layer_of(const FaultTarget& target) noexcept {
  if (const auto* w = std::get_if<WeightBitFault>(&target)) return w->layer;
  if (const auto* t = std::get_if<ThresholdBitFault>(&target)) return t->layer;
  return 0;
}

TransientSpace enumerate_transient_space(const Simulator& sim, std::size_t run_length) {
  return TransientSpace(sim.registers(), run_length);
}

PersistentSpace enumerate_persistent_space(const Model& model) {
  model.validate();
  return PersistentSpace(model.topology);
}

double confidence_quantile(double confidence) {
  struct Entry {
    double level;
    double t;
  };
  static constexpr Entry kTable[] = {{0.90, 1.645}, {0.95, 1.960}, {0.99, 2.576}};
  for (const auto& e : kTable) {
    if (std::abs(confidence - e.level) < 1e-9) return e.t;
  }
  throw ConfigError("unsupported confidence level " + std::to_string(confidence) +
                    " (expected 0.90, 0.95 or 0.99)");
}

std::uint64_t sample_size(std::uint64_t population, double confidence, double margin, double p) {
  if (population == 0) throw ConfigError("sample_size: population must be >= 1");
  if (!(margin > 0.0 && margin < 1.0)) throw ConfigError("sample_size: margin must be in (0, 1)");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("sample_size: p must be in (0, 1)");
  const long double t = confidence_quantile(confidence);
  const long double n_pop = static_cast<long double>(population);
  const long double e = margin;
  const long double n = n_pop / (1.0L + e * e * (n_pop - 1.0L) / (t * t * p * (1.0L - p)));
  const auto rounded = static_cast<std::uint64_t>(std::ceil(n - 1e-9L));
  return std::clamp<std::uint64_t>(rounded, 1, population);
}

std::vector<std::uint64_t> draw_sample(std::uint64_t population, std::uint64_t n,
                                       std::uint64_t seed) {
  if (n > population) throw ContractError("draw_sample: sample larger than population");
  Rng rng(seed);
  // Floyd's algorithm; draws the complement when it is the smaller set.
  const bool complement = n > population / 2;
  const std::uint64_t k = complement ? population - n : n;
  std::vector<std::uint64_t> chosen;
  chosen.reserve(k);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(k * 2);
  for (std::uint64_t j = population - k; j < population; ++j) {
    const std::uint64_t t = rng.below(j + 1);
    const std::uint64_t pick = seen.count(t) ? j : t;
    seen.insert(pick);
    chosen.push_back(pick);
  }
  std::sort(chosen.begin(), chosen.end());
  if (!complement) return chosen;
  std::vector<std::uint64_t> out;
  out.reserve(n);
  std::size_t c = 0;
  for (std::uint64_t uid = 0; uid < population; ++uid) {
    if (c < chosen.size() && chosen[c] == uid) {
      ++c;
    } else {
      out.push_back(uid);
    }
  }
  return out;
}

std::string_view outcome_name(Outcome o) noexcept {
  switch (o) {
    case Outcome::Masked: return "masked";
    case Outcome::MsbOnly: return "msb_only";
    case Outcome::Tolerable: return "tolerable";
    case Outcome::Critical: return "critical";
    case Outcome::Crash: return "crash";
  }
  return "unknown";
}

Outcome parse_outcome(std::string_view name) {
  for (auto o : {Outcome::Masked, Outcome::MsbOnly, Outcome::Tolerable, Outcome::Critical,
                 Outcome::Crash}) {
    if (outcome_name(o) == name) return o;
  }
  throw ParseError("unknown outcome '" + std::string(name) + "'");
}

std::size_t decide_class(const ClassScores& scores, std::size_t useful_lsb_bits, ArgmaxMode mode) {
  return mode == ArgmaxMode::Raw ? classify_scores(scores)
                                 : classify_scores(scores.masked(useful_lsb_bits));
}

Outcome classify(const ClassScores& golden, const RunResult& result, std::size_t useful_lsb_bits,
                 ArgmaxMode mode) {
  if (!result.completed()) return Outcome::Crash;
  if (result.scores == golden) return Outcome::Masked;
  if (result.scores.masked(useful_lsb_bits) == golden.masked(useful_lsb_bits)) {
    return Outcome::MsbOnly;
  }
  return decide_class(result.scores, useful_lsb_bits, mode) ==
                 decide_class(golden, useful_lsb_bits, mode)
             ? Outcome::Tolerable
             : Outcome::Critical;
}

GoldenRun compute_golden(const Model& model, const BitVector& input,
                         std::vector<std::size_t> fifo_depths, bool keep_snapshots) {
  Simulator sim(model, std::move(fifo_depths));
  sim.load_input(input);
  GoldenRun g;
  g.input = input;
  g.fifo_depths = sim.fifo_depths();
  // Generous ceiling: every layer fully serialized, plus slack for FIFO handshakes.
  std::size_t ceiling = 64;
  for (const auto& l : model.topology.layers) ceiling += 4 * (l.neuron_folds() * l.synapse_folds() + 8);
  while (!sim.complete() && !sim.hung() && sim.cycle() < ceiling) {
    if (keep_snapshots) g.snapshots.push_back(sim);
    sim.step();
  }
  if (!sim.complete()) throw ConfigError("golden run did not complete; check FIFO depths");
  g.scores = sim.scores();
  g.latency = sim.cycle();
  g.windows = sim.layer_windows();
  return g;
}

std::size_t cycle_budget(std::size_t golden_latency, double budget_factor) {
  if (!(budget_factor >= 1.0)) throw ConfigError("budget_factor must be >= 1");
  return static_cast<std::size_t>(std::ceil(budget_factor * static_cast<double>(golden_latency)));
}

void flip_parameter(Model& model, const FaultTarget& target) {
  if (const auto* w = std::get_if<WeightBitFault>(&target)) {
    if (w->layer >= model.weights.size()) throw ContractError("flip_parameter: bad layer");
    model.weights[w->layer].flip_flat(w->flat_bit);
  } else if (const auto* t = std::get_if<ThresholdBitFault>(&target)) {
    if (t->layer >= model.thresholds.size() || t->neuron >= model.thresholds[t->layer].size() ||
        t->bit >= 32) {
      throw ContractError("flip_parameter: threshold bit out of range");
    }
    auto& v = model.thresholds[t->layer][t->neuron];
    v = static_cast<std::int32_t>(static_cast<std::uint32_t>(v) ^ (1U << t->bit));
  } else {
    throw ContractError("flip_parameter: transient fault is not a parameter fault");
  }
}

namespace {

class ParameterFlipGuard {
 public:
  ParameterFlipGuard(Model& model, const FaultTarget& target) : model_(model), target_(target) {
    flip_parameter(model_, target_);
  }
  ~ParameterFlipGuard() { flip_parameter(model_, target_); }
  ParameterFlipGuard(const ParameterFlipGuard&) = delete;
  ParameterFlipGuard& operator=(const ParameterFlipGuard&) = delete;

 private:
  Model& model_;
  const FaultTarget& target_;
};

}  // namespace

RunRecord inject_and_run(Model& model, const GoldenRun& golden, const FaultDescriptor& fault,
                         std::size_t input_index, const InjectionOptions& options) {
  const std::size_t budget = cycle_budget(golden.latency, options.budget_factor);
  const std::size_t lsb = model.topology.useful_lsb_bits;
  RunRecord rec;
  rec.fault = fault;
  rec.input_index = input_index;
  rec.golden_class = decide_class(golden.scores, lsb, options.argmax);

  RunResult result;
  if (const auto* t = std::get_if<TransientFault>(&fault.target)) {
    if (t->cycle == 0 || t->cycle > golden.latency) {
      throw ContractError("inject_and_run: transient cycle outside the golden run");
    }
    Simulator sim = golden.snapshots.empty() ? Simulator(model, golden.fifo_depths)
                                             : golden.snapshots[t->cycle - 1];
    if (golden.snapshots.empty()) sim.load_input(golden.input);
    if (t->reg_id >= sim.registers().size() || t->bit >= sim.registers()[t->reg_id].width) {
      throw ContractError("inject_and_run: register bit out of range");
    }
    rec.layer = sim.registers()[t->reg_id].layer_id;
    result = sim.run(budget, BitFlip{t->reg_id, t->bit, t->cycle});
  } else {
    rec.layer = PersistentSpace::layer_of(fault.target);
    ParameterFlipGuard guard(model, fault.target);
    Simulator sim(model, golden.fifo_depths);
    sim.load_input(golden.input);
    result = sim.run(budget);
  }

  rec.outcome = classify(golden.scores, result, lsb, options.argmax);
  rec.latency = result.latency;
  if (result.completed()) rec.observed_class = decide_class(result.scores, lsb, options.argmax);
  return rec;
}

}  // namespace bnnfi
