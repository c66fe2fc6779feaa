#include "bnnfi/random.hpp"

#include "bnnfi/error.hpp"

namespace bnnfi {

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw ContractError("Rng::below: bound must be positive");
  // Rejection sampling on the largest multiple of bound.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % bound;
}

bool Rng::coin(double p_one) {
  // 53 random bits as a double in [0, 1).
  const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return u < p_one;
}

BitVector random_bits(std::size_t len, Rng& rng, double p_one) {
  BitVector v(len);
  for (std::size_t i = 0; i < len; ++i) {
    if (rng.coin(p_one)) v.set(i);
  }
  return v;
}

Model generate_model(const NetworkTopology& topology, std::uint64_t seed) {
  topology.validate();
  Rng rng(seed);
  Model m;
  m.topology = topology;
  for (const auto& spec : topology.layers) {
    BitMatrix w(spec.out_features, spec.in_features);
    for (std::size_t r = 0; r < spec.out_features; ++r) {
      for (std::size_t c = 0; c < spec.in_features; ++c) {
        if (rng.coin()) w.set(r, c);
      }
    }
    ThresholdVector t(spec.out_features, 0);
    if (!spec.is_output) {
      const auto half = static_cast<std::int64_t>(spec.in_features / 2);
      const auto spread = static_cast<std::int64_t>(spec.in_features / 16);
      for (auto& v : t) {
        const auto jitter =
            static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(2 * spread + 1))) - spread;
        v = static_cast<std::int32_t>(half + jitter);
      }
    }
    m.weights.push_back(std::move(w));
    m.thresholds.push_back(std::move(t));
  }
  return m;
}

std::vector<std::uint8_t> synthetic_image(std::uint64_t seed, double ink) {
  Rng rng(seed);
  std::vector<std::uint8_t> px(784, 0);
  for (auto& p : px) {
    if (rng.coin(ink)) p = static_cast<std::uint8_t>(1 + rng.below(255));
  }
  return px;
}

}  // namespace bnnfi
