#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "bnnfi/bits.hpp"

namespace bnnfi {

/// Shape and folding of one fully-connected layer.
struct LayerSpec {
  std::size_t layer_id = 0;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  std::size_t pe = 1;
  std::size_t simd = 1;
  bool is_output = false;

  std::size_t neuron_folds() const noexcept { return out_features / pe; }
  std::size_t synapse_folds() const noexcept { return in_features / simd; }
  /// Width of the per-PE accumulator and of each stored threshold: ceil(log2(in)) + 1.
  std::size_t accumulator_bits() const noexcept;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Largest supported SIMD lane count (one input slice fits a machine word).
inline constexpr std::size_t kMaxSimd = 64;
/// Largest supported PE count for hidden layers (output assembly plus valid bit fits a word).
inline constexpr std::size_t kMaxHiddenPe = 63;

struct NetworkTopology {
  std::vector<LayerSpec> layers;
  std::size_t output_width_bits = 32;
  std::size_t useful_lsb_bits = 6;

  std::size_t num_classes() const noexcept {
    return layers.empty() ? 0 : layers.back().out_features;
  }
  std::size_t input_features() const noexcept {
    return layers.empty() ? 0 : layers.front().in_features;
  }

  /// Throws ConfigError when any layer or chaining invariant is violated.
  void validate() const;

  /// Builds a chained topology from widths {in, h1, ..., classes} and per-layer PE/SIMD.
  static NetworkTopology chain(std::span<const std::size_t> widths,
                               std::span<const std::size_t> pe,
                               std::span<const std::size_t> simd);

  /// 784-256-256-256-10, PE/SIMD 16/16 on hidden layers, PE 10 / SIMD 16 on the output layer.
  static NetworkTopology reference();

  friend bool operator==(const NetworkTopology&, const NetworkTopology&) = default;
};

using ThresholdVector = std::vector<std::int32_t>;

/// One class score per output neuron, stored as the 32-bit register image.
struct ClassScores {
  std::vector<std::int32_t> values;

  std::size_t size() const noexcept { return values.size(); }
  /// Scores restricted to the low `bits` bits (unsigned view of the register).
  ClassScores masked(std::size_t bits) const;

  friend bool operator==(const ClassScores&, const ClassScores&) = default;
};

/// Weights and thresholds for every layer of a topology.
struct Model {
  NetworkTopology topology;
  std::vector<BitMatrix> weights;
  /// Thresholds per layer. The output layer's entry is kept (all zero) but never read.
  std::vector<ThresholdVector> thresholds;

  void validate() const;

  friend bool operator==(const Model&, const Model&) = default;
};

std::uint8_t neuron_activate(std::size_t match_count, std::int64_t threshold) noexcept;

/// Result of a single layer: activation bits for hidden layers, scores for the output layer.
struct LayerOutput {
  BitVector activations;
  ClassScores scores;
};

LayerOutput layer_forward(const BitVector& input, const BitMatrix& weights,
                          const ThresholdVector& thresholds, bool is_output);

ClassScores network_forward(const BitVector& input, const Model& model);

/// Zero pixels map to 0, everything else to 1. Expects exactly 784 pixels.
BitVector binarize_image(std::span<const std::uint8_t> pixels);

/// Index of the largest score, lowest index on ties.
std::size_t classify_scores(const ClassScores& scores) noexcept;

}  // namespace bnnfi
