#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "bnnfi/network.hpp"

namespace bnnfi {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Images from an IDX3 file: count x rows x cols unsigned bytes.
struct IdxImageSet {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;

  std::span<const std::uint8_t> image(std::size_t i) const;
};

struct IdxDataset {
  IdxImageSet images;
  std::vector<std::uint8_t> labels;  // empty when no labels file was given
};

IdxImageSet parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// Reads an IDX image file and, optionally, the matching labels file.
IdxDataset read_idx(const std::filesystem::path& images,
                    const std::optional<std::filesystem::path>& labels = std::nullopt);

std::vector<std::uint8_t> encode_idx_images(const IdxImageSet& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

// Model file (all multi-byte fields little-endian):
//   "BNNW" | u16 version | u32 layer_count
//   per layer: u32 in, u32 out, u32 pe, u32 simd,
//              ceil(out*in/8) bytes of weights (flat bit r*in+c at byte i/8, bit i%8),
//              out x i32 thresholds (zero for the output layer)
//   u32 CRC-32 (IEEE 802.3, reflected 0xEDB88320) of every preceding byte
inline constexpr std::uint16_t kModelFormatVersion = 1;

std::vector<std::uint8_t> encode_model(const Model& model);
Model decode_model(std::span<const std::uint8_t> bytes);

void write_model(const std::filesystem::path& path, const Model& model);
Model read_model(const std::filesystem::path& path);

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept;

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace bnnfi
