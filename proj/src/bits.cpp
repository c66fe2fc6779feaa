#include "bnnfi/bits.hpp"

#include <algorithm>
#include <bit>

#include "bnnfi/error.hpp"

namespace bnnfi {

namespace {

std::uint64_t low_mask(std::size_t count) noexcept {
  return count >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << count) - 1;
}

std::uint64_t read_bits(const std::vector<std::uint64_t>& words, std::size_t base_bit,
                        std::size_t limit, std::size_t pos, std::size_t count) noexcept {
  if (count == 0 || pos >= limit) return 0;
  if (pos + count > limit) count = limit - pos;
  const std::size_t bit = base_bit + pos;
  const std::size_t w = bit / 64;
  const std::size_t off = bit % 64;
  std::uint64_t v = words[w] >> off;
  if (off != 0 && off + count > 64) v |= words[w + 1] << (64 - off);
  return v & low_mask(count);
}

}  // namespace

BitVector BitVector::from_string(std::string_view bits) {
  BitVector v(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] == '1') {
      v.set(i);
    } else if (bits[i] != '0') {
      throw ContractError("BitVector::from_string: expected only '0' or '1'");
    }
  }
  return v;
}

bool BitVector::get(std::size_t i) const {
  if (i >= len_) throw ContractError("BitVector::get: index out of range");
  return (words_[i / 64] >> (i % 64)) & 1U;
}

void BitVector::set(std::size_t i, bool value) {
  if (i >= len_) throw ContractError("BitVector::set: index out of range");
  const std::uint64_t m = std::uint64_t{1} << (i % 64);
  if (value) {
    words_[i / 64] |= m;
  } else {
    words_[i / 64] &= ~m;
  }
}

void BitVector::flip(std::size_t i) {
  if (i >= len_) throw ContractError("BitVector::flip: index out of range");
  words_[i / 64] ^= std::uint64_t{1} << (i % 64);
}

std::uint64_t BitVector::extract(std::size_t pos, std::size_t count) const noexcept {
  return read_bits(words_, 0, len_, pos, count);
}

void BitVector::deposit(std::size_t pos, std::size_t count, std::uint64_t value) noexcept {
  for (std::size_t i = 0; i < count && pos + i < len_; ++i) {
    const std::size_t bit = pos + i;
    const std::uint64_t m = std::uint64_t{1} << (bit % 64);
    if ((value >> i) & 1U) {
      words_[bit / 64] |= m;
    } else {
      words_[bit / 64] &= ~m;
    }
  }
}

std::size_t BitVector::popcount() const noexcept {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::string BitVector::to_string() const {
  std::string s(len_, '0');
  for (std::size_t i = 0; i < len_; ++i) {
    if (get(i)) s[i] = '1';
  }
  return s;
}

std::size_t xnor_popcount(const BitVector& a, const BitVector& b) {
  if (a.size() != b.size()) throw ContractError("xnor_popcount: length mismatch");
  std::size_t differ = 0;
  for (std::size_t w = 0; w < a.word_count(); ++w) {
    differ += static_cast<std::size_t>(std::popcount(a.data()[w] ^ b.data()[w]));
  }
  return a.size() - differ;
}

BitMatrix::BitMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), words_per_row_((cols + 63) / 64),
      words_(rows * ((cols + 63) / 64), 0) {}

bool BitMatrix::get(std::size_t r, std::size_t c) const {
  if (r >= rows_ || c >= cols_) throw ContractError("BitMatrix::get: index out of range");
  return (words_[r * words_per_row_ + c / 64] >> (c % 64)) & 1U;
}

void BitMatrix::set(std::size_t r, std::size_t c, bool value) {
  if (r >= rows_ || c >= cols_) throw ContractError("BitMatrix::set: index out of range");
  const std::uint64_t m = std::uint64_t{1} << (c % 64);
  auto& w = words_[r * words_per_row_ + c / 64];
  w = value ? (w | m) : (w & ~m);
}

void BitMatrix::flip_flat(std::size_t flat_index) {
  if (flat_index >= bit_count()) throw ContractError("BitMatrix::flip_flat: index out of range");
  const std::size_t r = flat_index / cols_;
  const std::size_t c = flat_index % cols_;
  words_[r * words_per_row_ + c / 64] ^= std::uint64_t{1} << (c % 64);
}

bool BitMatrix::get_flat(std::size_t flat_index) const {
  if (flat_index >= bit_count()) throw ContractError("BitMatrix::get_flat: index out of range");
  return get(flat_index / cols_, flat_index % cols_);
}

BitVector BitMatrix::row(std::size_t r) const {
  if (r >= rows_) throw ContractError("BitMatrix::row: index out of range");
  BitVector v(cols_);
  for (std::size_t c = 0; c < cols_; c += 64) {
    const std::size_t n = std::min<std::size_t>(64, cols_ - c);
    v.deposit(c, n, extract(r, c, n));
  }
  return v;
}

void BitMatrix::set_row(std::size_t r, const BitVector& bits) {
  if (r >= rows_) throw ContractError("BitMatrix::set_row: index out of range");
  if (bits.size() != cols_) throw ContractError("BitMatrix::set_row: length mismatch");
  for (std::size_t w = 0; w < words_per_row_; ++w) words_[r * words_per_row_ + w] = bits.data()[w];
}

std::size_t BitMatrix::row_agreement(std::size_t r, const BitVector& input) const {
  if (r >= rows_) throw ContractError("BitMatrix::row_agreement: index out of range");
  if (input.size() != cols_) throw ContractError("BitMatrix::row_agreement: length mismatch");
  std::size_t differ = 0;
  const std::uint64_t* row = &words_[r * words_per_row_];
  for (std::size_t w = 0; w < words_per_row_; ++w) {
    differ += static_cast<std::size_t>(std::popcount(row[w] ^ input.data()[w]));
  }
  return cols_ - differ;
}

std::uint64_t BitMatrix::extract(std::size_t r, std::size_t col, std::size_t count) const noexcept {
  if (r >= rows_) return 0;
  return read_bits(words_, r * words_per_row_ * 64, cols_, col, count);
}

}  // namespace bnnfi
