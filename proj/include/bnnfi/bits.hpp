#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace bnnfi {

/// Packed bit vector. Bits beyond size() are kept zero in storage.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t len) : len_(len), words_((len + 63) / 64, 0) {}

  /// Builds from a '0'/'1' string; character i becomes bit i.
  static BitVector from_string(std::string_view bits);

  std::size_t size() const noexcept { return len_; }
  std::size_t word_count() const noexcept { return words_.size(); }
  const std::uint64_t* data() const noexcept { return words_.data(); }

  bool get(std::size_t i) const;
  void set(std::size_t i, bool value = true);
  void flip(std::size_t i);

  /// Reads `count` (<= 64) bits starting at `pos`; bits past size() read as zero.
  std::uint64_t extract(std::size_t pos, std::size_t count) const noexcept;
  /// Writes the low `count` bits of `value` at `pos`; bits past size() are dropped.
  void deposit(std::size_t pos, std::size_t count, std::uint64_t value) noexcept;

  std::size_t popcount() const noexcept;
  std::string to_string() const;

  friend bool operator==(const BitVector&, const BitVector&) = default;

 private:
  std::size_t len_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Number of positions where `a` and `b` agree. Throws ContractError on length mismatch.
std::size_t xnor_popcount(const BitVector& a, const BitVector& b);

/// Row-major binary matrix. Bit (r, c) is the weight of synapse c into neuron r,
/// 1 encodes +1 and 0 encodes -1. Flat index r * cols + c addresses every bit.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t cols);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t bit_count() const noexcept { return rows_ * cols_; }

  bool get(std::size_t r, std::size_t c) const;
  void set(std::size_t r, std::size_t c, bool value = true);
  void flip_flat(std::size_t flat_index);
  bool get_flat(std::size_t flat_index) const;

  BitVector row(std::size_t r) const;
  void set_row(std::size_t r, const BitVector& bits);

  /// Agreement count between row r and `input` (input.size() must equal cols()).
  std::size_t row_agreement(std::size_t r, const BitVector& input) const;
  /// Reads `count` (<= 64) bits of row r starting at column `col`.
  std::uint64_t extract(std::size_t r, std::size_t col, std::size_t count) const noexcept;

  friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> words_;
};

}  // namespace bnnfi
