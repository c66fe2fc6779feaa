#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "bnnfi/bits.hpp"
#include "bnnfi/network.hpp"

namespace bnnfi {

/// Seeded generator with a platform-independent bounded draw
/// (std::uniform_int_distribution differs between standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  bool coin(double p_one = 0.5);

 private:
  std::mt19937_64 engine_;
};

/// Random weights; hidden thresholds drawn around in_features / 2 so activations stay balanced.
Model generate_model(const NetworkTopology& topology, std::uint64_t seed);

BitVector random_bits(std::size_t len, Rng& rng, double p_one = 0.5);

/// A 784-pixel grayscale image with roughly `ink` of the pixels non-zero.
std::vector<std::uint8_t> synthetic_image(std::uint64_t seed, double ink = 0.2);

}  // namespace bnnfi
