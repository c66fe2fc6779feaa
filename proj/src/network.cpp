#include "bnnfi/network.hpp"

#include <bit>
#include <string>

#include "bnnfi/error.hpp"

namespace bnnfi {

std::size_t LayerSpec::accumulator_bits() const noexcept {
  // ceil(log2(n)) + 1; for n == 1 this is 1.
  const std::size_t ceil_log2 = in_features <= 1 ? 0 : std::bit_width(in_features - 1);
  return ceil_log2 + 1;
}

void NetworkTopology::validate() const {
  if (layers.empty()) throw ConfigError("topology: at least one layer is required");
  if (output_width_bits == 0 || output_width_bits > 32) {
    throw ConfigError("topology: output_width_bits must be in [1, 32]");
  }
  if (useful_lsb_bits == 0 || useful_lsb_bits > output_width_bits) {
    throw ConfigError("topology: useful_lsb_bits must be in [1, output_width_bits]");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "topology: layer " + std::to_string(i) + ": ";
    if (l.layer_id != i) throw ConfigError(where + "layer_id must equal its position");
    if (l.in_features == 0 || l.out_features == 0 || l.pe == 0 || l.simd == 0) {
      throw ConfigError(where + "in_features, out_features, pe and simd must be >= 1");
    }
    if (l.out_features % l.pe != 0) throw ConfigError(where + "pe does not divide out_features");
    if (l.in_features % l.simd != 0) throw ConfigError(where + "simd does not divide in_features");
    if (l.simd > kMaxSimd) throw ConfigError(where + "simd exceeds 64");
    if (l.is_output != (i + 1 == layers.size())) {
      throw ConfigError(where + "exactly the last layer must be the output layer");
    }
    if (!l.is_output && l.pe > kMaxHiddenPe) throw ConfigError(where + "hidden-layer pe exceeds 63");
    if (i + 1 < layers.size() && l.out_features != layers[i + 1].in_features) {
      throw ConfigError(where + "out_features does not match the next layer's in_features");
    }
  }
}

NetworkTopology NetworkTopology::chain(std::span<const std::size_t> widths,
                                       std::span<const std::size_t> pe,
                                       std::span<const std::size_t> simd) {
  if (widths.size() < 2) throw ConfigError("topology: need at least input and output widths");
  const std::size_t n = widths.size() - 1;
  if (pe.size() != n || simd.size() != n) {
    throw ConfigError("topology: pe/simd lists must have one entry per layer");
  }
  NetworkTopology t;
  for (std::size_t i = 0; i < n; ++i) {
    t.layers.push_back(LayerSpec{i, widths[i], widths[i + 1], pe[i], simd[i], i + 1 == n});
  }
  t.validate();
  return t;
}

NetworkTopology NetworkTopology::reference() {
  const std::size_t widths[] = {784, 256, 256, 256, 10};
  const std::size_t pe[] = {16, 16, 16, 10};
  const std::size_t simd[] = {16, 16, 16, 16};
  return chain(widths, pe, simd);
}

ClassScores ClassScores::masked(std::size_t bits) const {
  ClassScores out;
  out.values.reserve(values.size());
  const std::uint32_t mask = bits >= 32 ? 0xFFFFFFFFU : ((1U << bits) - 1U);
  for (auto v : values) {
    out.values.push_back(static_cast<std::int32_t>(static_cast<std::uint32_t>(v) & mask));
  }
  return out;
}

void Model::validate() const {
  topology.validate();
  const auto& layers = topology.layers;
  if (weights.size() != layers.size() || thresholds.size() != layers.size()) {
    throw ConfigError("model: one weight matrix and threshold vector per layer required");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (weights[i].rows() != layers[i].out_features || weights[i].cols() != layers[i].in_features) {
      throw ConfigError("model: weight matrix " + std::to_string(i) + " shape mismatch");
    }
    if (thresholds[i].size() != layers[i].out_features) {
      throw ConfigError("model: threshold vector " + std::to_string(i) + " length mismatch");
    }
  }
}

std::uint8_t neuron_activate(std::size_t match_count, std::int64_t threshold) noexcept {
  return static_cast<std::int64_t>(match_count) >= threshold ? 1 : 0;
}

LayerOutput layer_forward(const BitVector& input, const BitMatrix& weights,
                          const ThresholdVector& thresholds, bool is_output) {
  if (input.size() != weights.cols()) throw ContractError("layer_forward: input length mismatch");
  LayerOutput out;
  if (is_output) {
    out.scores.values.reserve(weights.rows());
    for (std::size_t r = 0; r < weights.rows(); ++r) {
      out.scores.values.push_back(static_cast<std::int32_t>(weights.row_agreement(r, input)));
    }
    return out;
  }
  if (thresholds.size() != weights.rows()) {
    throw ContractError("layer_forward: threshold count mismatch");
  }
  out.activations = BitVector(weights.rows());
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    if (neuron_activate(weights.row_agreement(r, input), thresholds[r])) out.activations.set(r);
  }
  return out;
}

ClassScores network_forward(const BitVector& input, const Model& model) {
  const auto& layers = model.topology.layers;
  if (layers.empty()) throw ContractError("network_forward: empty model");
  if (input.size() != layers.front().in_features) {
    throw ContractError("network_forward: input length mismatch");
  }
  BitVector x = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto out = layer_forward(x, model.weights[i], model.thresholds[i], layers[i].is_output);
    if (layers[i].is_output) return out.scores;
    x = std::move(out.activations);
  }
  throw ContractError("network_forward: topology has no output layer");
}

BitVector binarize_image(std::span<const std::uint8_t> pixels) {
  if (pixels.size() != 784) throw ContractError("binarize_image: expected 784 pixels");
  BitVector v(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    if (pixels[i] != 0) v.set(i);
  }
  return v;
}

std::size_t classify_scores(const ClassScores& scores) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.values.size(); ++i) {
    if (scores.values[i] > scores.values[best]) best = i;
  }
  return best;
}

}  // namespace bnnfi
