#include "bnnfi/dataflow.hpp"

#include <algorithm>
#include <bit>
#include <map>

#include "bnnfi/error.hpp"

namespace bnnfi {

namespace {

std::uint64_t low_mask(std::size_t bits) noexcept {
  return bits >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << bits) - 1;
}

std::size_t counter_bits(std::size_t limit) noexcept {
  // Bits needed to count 0..limit-1, at least one.
  return std::max<std::size_t>(1, std::bit_width(limit - 1));
}

}  // namespace

std::string_view role_name(RegisterRole role) noexcept {
  switch (role) {
    case RegisterRole::State: return "state";
    case RegisterRole::NeuronFoldCounter: return "neuron_fold_counter";
    case RegisterRole::SynapseFoldCounter: return "synapse_fold_counter";
    case RegisterRole::WeightAddr: return "weight_addr";
    case RegisterRole::PeAccumulator: return "pe_accumulator";
    case RegisterRole::InputWindow: return "input_window";
    case RegisterRole::OutputAssembly: return "output_assembly";
    case RegisterRole::FifoCount: return "fifo_count";
  }
  return "unknown";
}

std::string RegisterDescriptor::label() const {
  std::string s = "L" + std::to_string(layer_id) + "." + std::string(role_name(role));
  if (role == RegisterRole::PeAccumulator) s += "[" + std::to_string(index) + "]";
  return s;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceEntry>& trace) {
  for (const auto& e : trace) {
    out << e.cycle << ',' << e.layer << ',' << static_cast<std::uint32_t>(e.phase) << ','
        << e.neuron_fold << ',' << e.synapse_fold << '\n';
  }
}

std::optional<std::size_t> PhaseTable::phase_of(std::size_t cycle) const noexcept {
  for (std::size_t i = 0; i < phases.size(); ++i) {
    if (cycle >= phases[i].start_cycle && cycle <= phases[i].end_cycle) return i;
  }
  return std::nullopt;
}

PhaseTable phase_table(const std::vector<LayerWindow>& windows, std::size_t total_latency) {
  if (windows.empty()) throw ContractError("phase_table: no layer windows");
  std::size_t last_end = 0;
  std::vector<std::size_t> starts;
  for (const auto& w : windows) {
    if (w.start_cycle == 0 || w.start_cycle > w.end_cycle) {
      throw ContractError("phase_table: malformed window for layer " + std::to_string(w.layer_id));
    }
    starts.push_back(w.start_cycle);
    last_end = std::max(last_end, w.end_cycle);
  }
  if (total_latency == 0) total_latency = last_end;
  if (total_latency < last_end) throw ContractError("phase_table: windows exceed total latency");
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());

  PhaseTable table;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    Phase p;
    p.start_cycle = i == 0 ? 1 : starts[i];
    p.end_cycle = i + 1 < starts.size() ? starts[i + 1] - 1 : total_latency;
    for (const auto& w : windows) {
      const bool starts_here = w.start_cycle == starts[i];
      const bool carried = w.start_cycle < starts[i] && w.end_cycle > starts[i];
      if (starts_here || carried) p.active_layers.push_back(w.layer_id);
    }
    std::sort(p.active_layers.begin(), p.active_layers.end());
    table.phases.push_back(std::move(p));
  }
  return table;
}

std::vector<std::size_t> default_fifo_depths(const NetworkTopology& topology) {
  std::vector<std::size_t> depths;
  for (std::size_t i = 0; i + 1 < topology.layers.size(); ++i) {
    depths.push_back(2 * std::max(topology.layers[i].pe, topology.layers[i + 1].simd));
  }
  return depths;
}

Simulator::Simulator(const Model& model, std::vector<std::size_t> fifo_depths)
    : model_(&model), fifo_depths_(std::move(fifo_depths)) {
  model.validate();
  const auto& layers = model.topology.layers;
  if (fifo_depths_.empty()) fifo_depths_ = default_fifo_depths(model.topology);
  if (fifo_depths_.size() + 1 != layers.size()) {
    throw ConfigError("pipeline: expected one FIFO depth per layer edge");
  }
  for (std::size_t e = 0; e < fifo_depths_.size(); ++e) {
    const std::size_t need = std::max(layers[e].pe, layers[e + 1].simd);
    if (fifo_depths_[e] < need) {
      throw ConfigError("pipeline: FIFO " + std::to_string(e) + " depth must be at least " +
                        std::to_string(need));
    }
  }

  auto add = [this](std::size_t layer, RegisterRole role, std::size_t index, std::size_t width) {
    registers_.push_back(RegisterDescriptor{registers_.size(), layer, role, index, width});
    total_bits_ += width;
  };
  for (const auto& spec : layers) {
    LayerGeometry g;
    g.nf_bits = counter_bits(spec.neuron_folds());
    g.sf_bits = counter_bits(spec.synapse_folds());
    g.acc_bits = spec.accumulator_bits();
    g.first_reg = registers_.size();
    const std::size_t l = spec.layer_id;
    add(l, RegisterRole::State, 0, kStateBits);
    add(l, RegisterRole::NeuronFoldCounter, 0, g.nf_bits);
    add(l, RegisterRole::SynapseFoldCounter, 0, g.sf_bits);
    add(l, RegisterRole::WeightAddr, 0, kWeightAddrBits);
    for (std::size_t p = 0; p < spec.pe; ++p) add(l, RegisterRole::PeAccumulator, p, g.acc_bits);
    add(l, RegisterRole::InputWindow, 0, spec.in_features);
    add(l, RegisterRole::OutputAssembly, 0,
        spec.is_output ? spec.out_features * model.topology.output_width_bits : spec.pe + 1);
    if (l > 0) {
      g.fifo_count_bits = static_cast<std::size_t>(std::bit_width(fifo_depths_[l - 1]));
      add(l, RegisterRole::FifoCount, 0, g.fifo_count_bits);
    }
    geometry_.push_back(g);
  }
  load_input(BitVector(model.topology.input_features()));
}

void Simulator::load_input(const BitVector& input) {
  const auto& layers = model_->topology.layers;
  if (input.size() != layers.front().in_features) {
    throw ContractError("simulator: input length mismatch");
  }
  input_ = input;
  layers_.assign(layers.size(), LayerState{});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& s = layers_[l];
    s.acc.assign(layers[l].pe, 0);
    s.input_window = BitVector(layers[l].in_features);
    if (layers[l].is_output) s.score_bank.assign(layers[l].out_features, 0);
    if (l > 0) s.fifo_payload.assign(fifo_depths_[l - 1], 0);
  }
  cycle_ = 0;
  complete_ = false;
  hung_ = false;
  trace_.clear();
}

std::uint64_t Simulator::weight_word(std::size_t l, std::size_t pe, std::uint32_t addr) const {
  const auto& spec = model_->topology.layers[l];
  const std::size_t sf_count = spec.synapse_folds();
  const std::size_t depth = spec.neuron_folds() * sf_count;
  const std::size_t decoded = addr;
  if (decoded >= depth) return 0;
  const std::size_t neuron = (decoded / sf_count) * spec.pe + pe;
  return model_->weights[l].extract(neuron, (decoded % sf_count) * spec.simd, spec.simd);
}

bool Simulator::fifo_can_push(std::size_t consumer, std::size_t count) const {
  const std::size_t depth = fifo_depths_[consumer - 1];
  const std::size_t used = layers_[consumer].fifo_count;
  return used <= depth && depth - used >= count;
}

void Simulator::fifo_push(std::size_t consumer, std::size_t count, std::uint64_t bits) {
  auto& s = layers_[consumer];
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t slot = s.fifo_count + i;
    if (slot < s.fifo_payload.size()) s.fifo_payload[slot] = (bits >> i) & 1U;
  }
  s.fifo_count = static_cast<std::uint32_t>((s.fifo_count + count) &
                                            low_mask(geometry_[consumer].fifo_count_bits));
}

bool Simulator::fifo_pop(std::size_t consumer, std::size_t count, std::uint64_t& bits) {
  auto& s = layers_[consumer];
  if (s.fifo_count < count) return false;
  bits = 0;
  for (std::size_t i = 0; i < count && i < s.fifo_payload.size(); ++i) {
    bits |= static_cast<std::uint64_t>(s.fifo_payload[i] & 1U) << i;
  }
  const std::size_t shift = std::min(count, s.fifo_payload.size());
  std::rotate(s.fifo_payload.begin(), s.fifo_payload.begin() + static_cast<std::ptrdiff_t>(shift),
              s.fifo_payload.end());
  std::fill(s.fifo_payload.end() - static_cast<std::ptrdiff_t>(shift), s.fifo_payload.end(), 0);
  s.fifo_count = static_cast<std::uint32_t>((s.fifo_count - count) &
                                            low_mask(geometry_[consumer].fifo_count_bits));
  return true;
}

void Simulator::step_layer(std::size_t l) {
  const auto& spec = model_->topology.layers[l];
  const auto& g = geometry_[l];
  auto& s = layers_[l];
  bool active = false;
  TraceEntry entry;
  entry.cycle = cycle_;
  entry.layer = l;
  entry.neuron_fold = s.neuron_fold;
  entry.synapse_fold = s.synapse_fold;

  const std::uint64_t valid_bit = std::uint64_t{1} << spec.pe;
  if (!spec.is_output && (s.out_assembly & valid_bit) != 0 && fifo_can_push(l + 1, spec.pe)) {
    fifo_push(l + 1, spec.pe, s.out_assembly & (valid_bit - 1));
    s.out_assembly &= ~valid_bit;
    active = true;
  }

  if (s.state == static_cast<std::uint32_t>(FsmPhase::Idle)) {
    const bool ready = l == 0 || s.fifo_count >= spec.simd;
    if (ready) s.state = static_cast<std::uint32_t>(FsmPhase::Compute);
  }

  const std::size_t sf_count = spec.synapse_folds();
  const bool last_sf = s.synapse_fold == sf_count - 1;
  const bool output_busy = !spec.is_output && last_sf && (s.out_assembly & valid_bit) != 0;
  if (s.state == static_cast<std::uint32_t>(FsmPhase::Compute) && !output_busy) {
    const std::size_t offset = static_cast<std::size_t>(s.synapse_fold) * spec.simd;
    std::uint64_t slice = 0;
    bool have_input = true;
    if (s.neuron_fold == 0) {
      if (l == 0) {
        slice = input_.extract(offset, spec.simd);
      } else {
        have_input = fifo_pop(l, spec.simd, slice);
      }
      if (have_input) s.input_window.deposit(offset, spec.simd, slice);
    } else {
      slice = s.input_window.extract(offset, spec.simd);
    }

    if (have_input) {
      const std::uint64_t lane_mask = low_mask(spec.simd);
      const std::uint64_t acc_mask = low_mask(g.acc_bits);
      for (std::size_t p = 0; p < spec.pe; ++p) {
        const std::uint64_t w = weight_word(l, p, s.weight_addr);
        const auto matches = static_cast<std::uint32_t>(std::popcount(~(slice ^ w) & lane_mask));
        const std::uint64_t sum = s.synapse_fold == 0 ? matches : std::uint64_t{s.acc[p]} + matches;
        s.acc[p] = static_cast<std::uint32_t>(sum & acc_mask);
      }
      entry.weight_addr = s.weight_addr;
      s.weight_addr += 1;

      if (last_sf) {
        const auto& thresholds = model_->thresholds[l];
        const std::uint64_t score_mask = low_mask(model_->topology.output_width_bits);
        std::uint64_t bits = 0;
        for (std::size_t p = 0; p < spec.pe; ++p) {
          const std::size_t neuron = static_cast<std::size_t>(s.neuron_fold) * spec.pe + p;
          if (spec.is_output) {
            if (neuron < s.score_bank.size()) {
              s.score_bank[neuron] = static_cast<std::uint32_t>(s.acc[p] & score_mask);
            }
          } else {
            const std::int64_t t = neuron < thresholds.size() ? thresholds[neuron] : 0;
            if (neuron_activate(s.acc[p], t)) bits |= std::uint64_t{1} << p;
          }
        }
        if (!spec.is_output) s.out_assembly = bits | valid_bit;
        s.synapse_fold = 0;
        if (s.neuron_fold == spec.neuron_folds() - 1) {
          s.state = static_cast<std::uint32_t>(FsmPhase::Done);
          s.neuron_fold = 0;
          s.weight_addr = 0;
        } else {
          s.neuron_fold = static_cast<std::uint32_t>((s.neuron_fold + 1) & low_mask(g.nf_bits));
        }
      } else {
        s.synapse_fold = static_cast<std::uint32_t>((s.synapse_fold + 1) & low_mask(g.sf_bits));
      }
      active = true;
    }
  }

  if (active) {
    if (s.first_active == 0) s.first_active = cycle_;
    s.last_active = cycle_;
    if (trace_enabled_) {
      entry.phase = static_cast<FsmPhase>(s.state);
      if (entry.weight_addr) entry.phase = FsmPhase::Compute;
      trace_.push_back(entry);
    }
  }
}

void Simulator::step() {
  if (complete_ || hung_) return;
  ++cycle_;
  for (const auto& s : layers_) {
    if (s.state > static_cast<std::uint32_t>(FsmPhase::Done)) {
      hung_ = true;
      return;
    }
  }
  for (std::size_t l = layers_.size(); l-- > 0;) step_layer(l);
  if (layers_.back().state == static_cast<std::uint32_t>(FsmPhase::Done)) complete_ = true;
}

RunResult Simulator::run(std::size_t cycle_budget, std::optional<BitFlip> flip) {
  if (flip && flip->cycle <= cycle_) {
    throw ContractError("simulator: flip cycle already elapsed");
  }
  while (!complete_ && !hung_ && cycle_ < cycle_budget) {
    if (flip && flip->cycle == cycle_ + 1) flip_bit(flip->reg_id, flip->bit);
    step();
  }
  RunResult r;
  r.status = complete_ ? RunStatus::Completed : (hung_ ? RunStatus::Hang : RunStatus::Timeout);
  r.latency = cycle_;
  if (complete_) r.scores = scores();
  return r;
}

std::size_t Simulator::find_register(std::size_t layer, RegisterRole role, std::size_t index) const {
  for (const auto& r : registers_) {
    if (r.layer_id == layer && r.role == role && r.index == index) return r.reg_id;
  }
  throw ContractError("simulator: no register " + std::string(role_name(role)) + " in layer " +
                      std::to_string(layer));
}

void Simulator::flip_bit(std::size_t reg_id, std::size_t bit) {
  if (reg_id >= registers_.size()) throw ContractError("flip_bit: reg_id out of range");
  const auto& reg = registers_[reg_id];
  if (bit >= reg.width) throw ContractError("flip_bit: bit index out of range");
  auto& s = layers_[reg.layer_id];
  const std::uint32_t m32 = bit < 32 ? (1U << bit) : 0U;
  switch (reg.role) {
    case RegisterRole::State: s.state ^= m32; break;
    case RegisterRole::NeuronFoldCounter: s.neuron_fold ^= m32; break;
    case RegisterRole::SynapseFoldCounter: s.synapse_fold ^= m32; break;
    case RegisterRole::WeightAddr: s.weight_addr ^= m32; break;
    case RegisterRole::PeAccumulator: s.acc[reg.index] ^= m32; break;
    case RegisterRole::InputWindow: s.input_window.flip(bit); break;
    case RegisterRole::OutputAssembly:
      if (model_->topology.layers[reg.layer_id].is_output) {
        const std::size_t w = model_->topology.output_width_bits;
        s.score_bank[bit / w] ^= 1U << (bit % w);
      } else {
        s.out_assembly ^= std::uint64_t{1} << bit;
      }
      break;
    case RegisterRole::FifoCount: s.fifo_count ^= m32; break;
  }
}

bool Simulator::read_bit(std::size_t reg_id, std::size_t bit) const {
  if (reg_id >= registers_.size()) throw ContractError("read_bit: reg_id out of range");
  const auto& reg = registers_[reg_id];
  if (bit >= reg.width) throw ContractError("read_bit: bit index out of range");
  const auto& s = layers_[reg.layer_id];
  switch (reg.role) {
    case RegisterRole::InputWindow: return s.input_window.get(bit);
    case RegisterRole::OutputAssembly:
      if (model_->topology.layers[reg.layer_id].is_output) {
        const std::size_t w = model_->topology.output_width_bits;
        return (s.score_bank[bit / w] >> (bit % w)) & 1U;
      }
      return (s.out_assembly >> bit) & 1U;
    default: return (read_register(reg_id) >> bit) & 1U;
  }
}

std::uint64_t Simulator::read_register(std::size_t reg_id) const {
  if (reg_id >= registers_.size()) throw ContractError("read_register: reg_id out of range");
  const auto& reg = registers_[reg_id];
  const auto& s = layers_[reg.layer_id];
  switch (reg.role) {
    case RegisterRole::State: return s.state;
    case RegisterRole::NeuronFoldCounter: return s.neuron_fold;
    case RegisterRole::SynapseFoldCounter: return s.synapse_fold;
    case RegisterRole::WeightAddr: return s.weight_addr;
    case RegisterRole::PeAccumulator: return s.acc[reg.index];
    case RegisterRole::FifoCount: return s.fifo_count;
    default: break;
  }
  if (reg.width > 64) throw ContractError("read_register: register wider than 64 bits");
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < reg.width; ++b) {
    if (read_bit(reg_id, b)) v |= std::uint64_t{1} << b;
  }
  return v;
}

ClassScores Simulator::scores() const {
  ClassScores out;
  for (auto v : layers_.back().score_bank) out.values.push_back(static_cast<std::int32_t>(v));
  return out;
}

std::vector<LayerWindow> Simulator::layer_windows() const {
  if (!complete_) throw ContractError("layer_windows: run has not completed");
  std::vector<LayerWindow> windows;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].first_active == 0) {
      throw ContractError("layer_windows: layer " + std::to_string(l) + " was never active");
    }
    windows.push_back(LayerWindow{l, layers_[l].first_active, layers_[l].last_active});
  }
  return windows;
}

bool Simulator::same_state(const Simulator& other) const {
  return cycle_ == other.cycle_ && complete_ == other.complete_ && hung_ == other.hung_ &&
         input_ == other.input_ && layers_ == other.layers_;
}

RunResult run_to_completion(Simulator& sim, const BitVector& input, std::size_t cycle_budget) {
  if (cycle_budget == 0) throw ContractError("run_to_completion: cycle budget must be >= 1");
  sim.load_input(input);
  return sim.run(cycle_budget);
}

}  // namespace bnnfi
