#include <doctest.h>

#include <vector>

#include "bnnfi/bits.hpp"
#include "bnnfi/error.hpp"
#include "bnnfi/network.hpp"
#include "bnnfi/random.hpp"
#include "toy.hpp"

using namespace bnnfi;

namespace {

int pm1_dot(const BitVector& a, const BitVector& b) {
  int s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.get(i) ? 1 : -1) * (b.get(i) ? 1 : -1);
  return s;
}

}  // namespace

TEST_CASE("xnor_popcount examples") {
  CHECK(xnor_popcount(BitVector::from_string("1011"), BitVector::from_string("1011")) == 4);
  CHECK(xnor_popcount(BitVector::from_string("1010"), BitVector::from_string("0101")) == 0);
  const auto a = BitVector::from_string("1100");
  const auto b = BitVector::from_string("1010");
  CHECK(xnor_popcount(a, b) == 2);
  CHECK(2 * 2 - 4 == pm1_dot(a, b));
}

TEST_CASE("xnor_popcount matches the signed dot product for every 4-bit pair") {
  for (std::size_t x = 0; x < 16; ++x) {
    for (std::size_t y = 0; y < 16; ++y) {
      const auto a = toy::bits_of(x, 4), b = toy::bits_of(y, 4);
      CHECK(2 * static_cast<int>(xnor_popcount(a, b)) - 4 == pm1_dot(a, b));
    }
  }
}

TEST_CASE("xnor_popcount identity across word boundaries") {
  Rng rng(11);
  for (std::size_t len : {1, 63, 64, 65, 127, 128, 129, 1000}) {
    const auto a = random_bits(len, rng), b = random_bits(len, rng);
    CHECK(2 * static_cast<long>(xnor_popcount(a, b)) - static_cast<long>(len) == pm1_dot(a, b));
  }
  CHECK_THROWS_AS(xnor_popcount(BitVector(3), BitVector(4)), ContractError);
}

TEST_CASE("BitVector accessors") {
  BitVector v(70);
  v.set(69);
  v.flip(0);
  CHECK(v.popcount() == 2);
  CHECK(v.extract(64, 6) == 0b100000);
  v.deposit(2, 3, 0b101);
  CHECK(v.get(2));
  CHECK_FALSE(v.get(3));
  CHECK(v.get(4));
  CHECK_THROWS_AS(v.get(70), ContractError);
  CHECK(BitVector::from_string("0110").to_string() == "0110");
}

TEST_CASE("neuron_activate threshold convention") {
  CHECK(neuron_activate(10, 10) == 1);
  CHECK(neuron_activate(9, 10) == 0);
  CHECK(neuron_activate(0, 0) == 1);
}

TEST_CASE("layer_forward examples") {
  BitMatrix w(2, 4);
  w.set_row(0, BitVector::from_string("1111"));
  const auto in = BitVector::from_string("1111");
  const auto out = layer_forward(in, w, {3, 3}, false);
  CHECK(out.activations.to_string() == "10");

  BitMatrix w1(1, 4);
  w1.set_row(0, BitVector::from_string("1111"));
  CHECK(layer_forward(in, w1, {0}, true).scores.values == std::vector<std::int32_t>{4});

  Rng rng(5);
  const auto x = random_bits(12, rng);
  BitMatrix wm(3, 12);
  for (std::size_t r = 0; r < 3; ++r) wm.set_row(r, r == 1 ? x : random_bits(12, rng));
  CHECK(layer_forward(x, wm, {100, 12, 100}, false).activations.get(1));
}

TEST_CASE("network_forward composes per-layer hand oracle") {
  // 4 -> 2 -> 1
  const std::size_t w[] = {4, 2, 1}, pe[] = {1, 1}, simd[] = {1, 1};
  Model m{NetworkTopology::chain(w, pe, simd), {BitMatrix(2, 4), BitMatrix(1, 2)}, {{2, 3}, {0}}};
  m.weights[0].set_row(0, BitVector::from_string("1100"));
  m.weights[0].set_row(1, BitVector::from_string("0011"));
  m.weights[1].set_row(0, BitVector::from_string("10"));
  const auto x = BitVector::from_string("1110");
  // Row 0 agrees on 3 bits (>= 2 fires), row 1 agrees on 1 bit (< 3).
  // Hidden = 10; output row 10 agrees on 2 bits.
  CHECK(network_forward(x, m).values == std::vector<std::int32_t>{2});
}

TEST_CASE("all-zero weights with unreachable thresholds silence the hidden layer") {
  const auto topo = toy::small();
  Model m = generate_model(topo, 1);
  for (auto& wm : m.weights) wm = BitMatrix(wm.rows(), wm.cols());
  for (auto& t : m.thresholds[0]) t = 33;
  const auto x = BitVector::from_string("10110011101100111011001110110011");
  const auto h = layer_forward(x, m.weights[0], m.thresholds[0], false);
  CHECK(h.activations.popcount() == 0);
}

TEST_CASE("binarize_image rule") {
  std::vector<std::uint8_t> px(784, 0);
  px[1] = 1;
  px[2] = 128;
  px[3] = 255;
  const auto b = binarize_image(px);
  CHECK(b.get(0) == false);
  CHECK(b.get(1));
  CHECK(b.get(2));
  CHECK(b.get(3));
  CHECK(b.popcount() == 3);
  CHECK(binarize_image(std::vector<std::uint8_t>(784, 0)).popcount() == 0);
  CHECK(binarize_image(std::vector<std::uint8_t>(784, 255)).popcount() == 784);
  CHECK_THROWS(binarize_image(std::vector<std::uint8_t>(10, 0)));
}

TEST_CASE("classify_scores argmax and tie-break") {
  CHECK(classify_scores({{0, 0, 5, 0, 0, 0, 0, 0, 0, 0}}) == 2);
  CHECK(classify_scores({{5, 5, 0, 0, 0, 0, 0, 0, 0, 0}}) == 0);
  CHECK(classify_scores({{-1, -3, -2, -4, -5, -6, -7, -8, -9, -10}}) == 0);
}

TEST_CASE("single weight-bit flip only changes its own neuron") {
  const auto topo = toy::small();
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Model m = generate_model(topo, 100 + trial);
    const auto x = random_bits(32, rng);
    const auto before = layer_forward(x, m.weights[0], m.thresholds[0], false);
    const std::size_t flat = rng.below(m.weights[0].bit_count());
    m.weights[0].flip_flat(flat);
    const auto after = layer_forward(x, m.weights[0], m.thresholds[0], false);
    const std::size_t neuron = flat / 32;
    for (std::size_t r = 0; r < 16; ++r) {
      if (r != neuron) CHECK(before.activations.get(r) == after.activations.get(r));
    }
  }
}

TEST_CASE("topology validation") {
  NetworkTopology empty;
  CHECK_THROWS_AS(empty.validate(), ConfigError);
  const std::size_t w[] = {32, 16, 10}, pe[] = {3, 5}, simd[] = {4, 4};
  CHECK_THROWS_AS(NetworkTopology::chain(w, pe, simd), ConfigError);
  const auto ref = NetworkTopology::reference();
  CHECK(ref.layers.size() == 4);
  CHECK(ref.num_classes() == 10);
  CHECK(ref.layers[0].accumulator_bits() == 11);
  CHECK(ref.layers[1].accumulator_bits() == 9);
}
