#include <doctest.h>

#include <map>
#include <sstream>

#include "bnnfi/dataflow.hpp"
#include "bnnfi/error.hpp"
#include "bnnfi/fault.hpp"
#include "bnnfi/random.hpp"
#include "toy.hpp"

using namespace bnnfi;

TEST_CASE("register enumeration of the 8-4-2 toy net") {
  const Model m = generate_model(toy::tiny(), 1);
  Simulator sim(m);
  const auto& regs = sim.registers();
  // Layer 0: state 2, nf 1, sf 2, addr 32, acc 4+4, window 8, assembly 3.
  // Layer 1: state 2, nf 1, sf 1, addr 32, acc 3+3, window 4, scores 64, fifo count 3.
  struct Want {
    std::string label;
    std::size_t width;
  };
  const std::vector<Want> want = {
      {"L0.state", 2},          {"L0.neuron_fold_counter", 1}, {"L0.synapse_fold_counter", 2},
      {"L0.weight_addr", 32},   {"L0.pe_accumulator[0]", 4},   {"L0.pe_accumulator[1]", 4},
      {"L0.input_window", 8},   {"L0.output_assembly", 3},     {"L1.state", 2},
      {"L1.neuron_fold_counter", 1}, {"L1.synapse_fold_counter", 1}, {"L1.weight_addr", 32},
      {"L1.pe_accumulator[0]", 3},   {"L1.pe_accumulator[1]", 3},    {"L1.input_window", 4},
      {"L1.output_assembly", 64},    {"L1.fifo_count", 3},
  };
  REQUIRE(regs.size() == want.size());
  std::size_t bits = 0;
  for (std::size_t i = 0; i < regs.size(); ++i) {
    CHECK(regs[i].reg_id == i);
    CHECK(regs[i].label() == want[i].label);
    CHECK(regs[i].width == want[i].width);
    bits += want[i].width;
  }
  CHECK(bits == 169);
  CHECK(sim.total_register_bits() == 169);
}

TEST_CASE("reference register count follows the vocabulary") {
  const auto topo = NetworkTopology::reference();
  const Model m = generate_model(topo, 2);
  Simulator sim(m);
  std::size_t expected = 0;
  for (const auto& l : topo.layers) expected += 4 + l.pe + 2 + (l.layer_id > 0 ? 1 : 0);
  CHECK(sim.registers().size() == expected);
}

TEST_CASE("fault-free runs match the functional model") {
  const auto topo = toy::small();
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const Model m = generate_model(topo, i);
    const auto x = random_bits(32, rng);
    Simulator sim(m);
    const auto r = run_to_completion(sim, x, 10000);
    REQUIRE(r.completed());
    CHECK(r.scores == network_forward(x, m));
    const auto latency = r.latency;
    // Budget of twice the latency also completes with the same scores.
    Simulator again(m);
    const auto r2 = run_to_completion(again, x, 2 * latency);
    CHECK(r2.completed());
    CHECK(r2.latency == latency);
    CHECK(r2.scores == r.scores);
  }
}

TEST_CASE("latency is input independent and stepping a finished run changes nothing") {
  const Model m = generate_model(toy::small(), 4);
  Rng rng(9);
  Simulator sim(m);
  const auto first = run_to_completion(sim, random_bits(32, rng), 10000).latency;
  for (int i = 0; i < 10; ++i) CHECK(run_to_completion(sim, random_bits(32, rng), 10000).latency == first);
  const auto scores = sim.scores();
  Simulator copy = sim;
  sim.step();
  sim.step();
  CHECK(sim.scores() == scores);
  CHECK(sim.same_state(copy));
}

TEST_CASE("single layer drains in neuron folds times synapse folds cycles") {
  for (auto [in, out, pe, simd] : std::vector<std::array<std::size_t, 4>>{
           {8, 2, 2, 2}, {16, 4, 2, 4}, {32, 10, 5, 4}, {64, 10, 10, 16}}) {
    const std::size_t w[] = {in, out}, p[] = {pe}, s[] = {simd};
    const Model m = generate_model(NetworkTopology::chain(w, p, s), 1);
    Simulator sim(m);
    Rng rng(1);
    CHECK(run_to_completion(sim, random_bits(in, rng), 10000).latency == (out / pe) * (in / simd));
  }
}

TEST_CASE("budget of one cycle times out") {
  const Model m = generate_model(toy::small(), 5);
  Simulator sim(m);
  Rng rng(1);
  CHECK(run_to_completion(sim, random_bits(32, rng), 1).status == RunStatus::Timeout);
}

TEST_CASE("bit flips are involutions") {
  const Model m = generate_model(toy::small(), 6);
  Simulator sim(m);
  Rng rng(2);
  sim.load_input(random_bits(32, rng));
  for (int i = 0; i < 7; ++i) sim.step();
  const Simulator before = sim;
  for (const auto& r : sim.registers()) {
    for (std::size_t b = 0; b < r.width; ++b) {
      sim.flip_bit(r.reg_id, b);
      sim.flip_bit(r.reg_id, b);
    }
  }
  CHECK(sim.same_state(before));
  CHECK_THROWS_AS(sim.flip_bit(sim.registers().size(), 0), ContractError);
  CHECK_THROWS_AS(sim.flip_bit(0, 2), ContractError);
}

TEST_CASE("accumulator bit 0 flip moves the value by one") {
  const Model m = generate_model(toy::small(), 7);
  Simulator sim(m);
  Rng rng(2);
  sim.load_input(random_bits(32, rng));
  for (int i = 0; i < 3; ++i) sim.step();
  const auto reg = sim.find_register(0, RegisterRole::PeAccumulator, 2);
  const auto v = static_cast<long>(sim.read_register(reg));
  sim.flip_bit(reg, 0);
  const auto w = static_cast<long>(sim.read_register(reg));
  CHECK((w - v == 1 || w - v == -1));
}

TEST_CASE("weight address upset redirects later weight reads") {
  const Model m = generate_model(toy::small(), 8);
  Rng rng(4);
  const auto x = random_bits(32, rng);
  auto addresses = [&](bool inject) {
    Simulator sim(m);
    sim.enable_trace(true);
    sim.load_input(x);
    const auto reg = sim.find_register(0, RegisterRole::WeightAddr);
    auto res = sim.run(1000, inject ? std::optional<BitFlip>(BitFlip{reg, 1, 10}) : std::nullopt);
    (void)res;
    std::vector<std::pair<std::size_t, std::uint32_t>> out;
    for (const auto& e : sim.trace()) {
      if (e.layer == 0 && e.weight_addr) out.emplace_back(e.cycle, *e.weight_addr);
    }
    return out;
  };
  const auto golden = addresses(false);
  const auto faulty = addresses(true);
  std::size_t diffs_before = 0, diffs_after = 0;
  for (std::size_t i = 0; i < std::min(golden.size(), faulty.size()); ++i) {
    if (golden[i] != faulty[i]) (golden[i].first < 10 ? diffs_before : diffs_after)++;
  }
  CHECK(diffs_before == 0);
  CHECK(diffs_after > 0);
}

TEST_CASE("trace windows agree with layer_windows and phase_table") {
  const Model m = generate_model(toy::small(), 9);
  Simulator sim(m);
  sim.enable_trace(true);
  Rng rng(8);
  const auto r = run_to_completion(sim, random_bits(32, rng), 10000);
  REQUIRE(r.completed());
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> seen;
  for (const auto& e : sim.trace()) {
    auto [it, fresh] = seen.try_emplace(e.layer, e.cycle, e.cycle);
    if (!fresh) {
      it->second.first = std::min(it->second.first, e.cycle);
      it->second.second = std::max(it->second.second, e.cycle);
    }
  }
  const auto windows = sim.layer_windows();
  REQUIRE(windows.size() == 2);
  for (const auto& w : windows) {
    CHECK(seen.at(w.layer_id).first == w.start_cycle);
    CHECK(seen.at(w.layer_id).second == w.end_cycle);
  }
  CHECK(windows.back().end_cycle == r.latency);
  const auto table = phase_table(windows, r.latency);
  // Layer 1 starts while layer 0 is still running.
  REQUIRE(table.phases.size() == 2);
  CHECK(table.phases[0].active_layers == std::vector<std::size_t>{0});
  CHECK(table.phases[1].active_layers == std::vector<std::size_t>{0, 1});
  CHECK(table.phases[1].end_cycle == r.latency);

  std::ostringstream csv;
  write_trace_csv(csv, sim.trace());
  std::istringstream lines(csv.str());
  std::string first;
  std::getline(lines, first);
  CHECK(first == "1,0,1,0,0");
}

TEST_CASE("phase_table examples") {
  const std::vector<LayerWindow> windows = {{0, 1, 198}, {1, 51, 214}, {2, 202, 230}, {3, 218, 233}, {4, 233, 235}};
  const auto t = phase_table(windows);
  const std::vector<Phase> want = {
      {1, 50, {0}}, {51, 201, {0, 1}}, {202, 217, {1, 2}}, {218, 232, {2, 3}}, {233, 235, {4}}};
  CHECK(t.phases == want);
  CHECK(t.phase_of(51) == 1);
  CHECK(t.phase_of(300) == std::nullopt);

  const auto single = phase_table({{0, 1, 40}});
  REQUIRE(single.phases.size() == 1);
  CHECK(single.phases[0].start_cycle == 1);
  CHECK(single.phases[0].end_cycle == 40);
  CHECK_THROWS_AS(phase_table({}), ContractError);
}

TEST_CASE("FIFO depth below the minimum is rejected") {
  const Model m = generate_model(toy::small(), 1);
  CHECK_THROWS_AS(Simulator(m, {3}), ConfigError);
  CHECK_NOTHROW(Simulator(m, {4}));
  CHECK(default_fifo_depths(m.topology) == std::vector<std::size_t>{8});
  // The smallest legal FIFO still produces golden results.
  Simulator narrow(m, {4});
  Rng rng(3);
  const auto x = random_bits(32, rng);
  const auto r = run_to_completion(narrow, x, 10000);
  CHECK(r.completed());
  CHECK(r.scores == network_forward(x, m));
}

TEST_CASE("reference-scale runs match the functional model") {
  const Model m = generate_model(NetworkTopology::reference(), 17);
  Simulator sim(m);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto x = binarize_image(synthetic_image(seed));
    const auto r = run_to_completion(sim, x, 100000);
    REQUIRE(r.completed());
    CHECK(r.scores == network_forward(x, m));
  }
}

TEST_CASE("a transient flip leaves the trace prefix untouched") {
  const Model m = generate_model(toy::small(), 10);
  Rng rng(6);
  const auto x = random_bits(32, rng);
  auto traced = [&](std::optional<BitFlip> flip) {
    Simulator sim(m);
    sim.enable_trace(true);
    sim.load_input(x);
    sim.run(200, flip);
    return sim.trace();
  };
  const auto golden = traced(std::nullopt);
  Simulator probe(m);
  const auto nf = probe.find_register(0, RegisterRole::NeuronFoldCounter);
  const auto faulty = traced(BitFlip{nf, 0, 12});
  std::size_t i = 0;
  for (; i < golden.size() && golden[i].cycle < 12; ++i) {
    REQUIRE(i < faulty.size());
    CHECK(faulty[i].cycle == golden[i].cycle);
    CHECK(faulty[i].neuron_fold == golden[i].neuron_fold);
    CHECK(faulty[i].synapse_fold == golden[i].synapse_fold);
    CHECK(faulty[i].weight_addr == golden[i].weight_addr);
  }
  CHECK(i > 0);
}
