#pragma once

// Bit-parallel and bit-serial integer matrices, conversion between them, and
// the plane-major byte layout produced by the parallel-to-serial converter.

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bismo/error.hpp"

namespace bismo {

inline constexpr unsigned kMaxBits = 64;

inline bool is_pow2(std::uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

inline std::size_t round_up(std::size_t v, std::size_t multiple) {
  return (v + multiple - 1) / multiple * multiple;
}

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

/// Smallest and largest value representable in `bits` bits.
inline std::pair<std::int64_t, std::int64_t> value_range(unsigned bits, bool is_signed) {
  if (is_signed) {
    if (bits >= 64) return {INT64_MIN, INT64_MAX};
    return {-(std::int64_t{1} << (bits - 1)), (std::int64_t{1} << (bits - 1)) - 1};
  }
  if (bits >= 63) return {0, INT64_MAX};
  return {0, (std::int64_t{1} << bits) - 1};
}

/// Conventional row-major integer matrix with a declared bit width.
///
/// Elements are held as 64-bit signed integers; `bits` and `is_signed` are
/// metadata checked at construction.
class BitParallelMatrix {
 public:
  BitParallelMatrix() = default;

  BitParallelMatrix(std::size_t rows, std::size_t cols, unsigned bits, bool is_signed)
      : BitParallelMatrix(rows, cols, bits, is_signed,
                          std::vector<std::int64_t>(rows * cols, 0)) {}

  BitParallelMatrix(std::size_t rows, std::size_t cols, unsigned bits, bool is_signed,
                    std::vector<std::int64_t> elems)
      : rows_(rows), cols_(cols), bits_(bits), signed_(is_signed), elems_(std::move(elems)) {
    if (rows_ == 0 || cols_ == 0)
      fail(ErrorKind::Dimension, "matrix must have at least one row and one column");
    if (bits_ == 0 || bits_ > kMaxBits)
      fail(ErrorKind::Unsupported, "bit width " + std::to_string(bits_) + " outside 1..64");
    if (elems_.size() != rows_ * cols_)
      fail(ErrorKind::Dimension, "element count does not match rows*cols");
    auto [lo, hi] = value_range(bits_, signed_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) {
        std::int64_t v = elems_[r * cols_ + c];
        if (v < lo || v > hi)
          fail(ErrorKind::Range, "element (" + std::to_string(r) + ", " + std::to_string(c) +
                                     ") = " + std::to_string(v) + " not representable in " +
                                     std::to_string(bits_) + (signed_ ? " signed" : " unsigned") +
                                     " bits");
      }
  }

  static BitParallelMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows,
                                     unsigned bits, bool is_signed) {
    if (rows.empty() || rows.front().empty())
      fail(ErrorKind::Dimension, "matrix must have at least one row and one column");
    std::vector<std::int64_t> flat;
    for (const auto& row : rows) {
      if (row.size() != rows.front().size()) fail(ErrorKind::Dimension, "ragged rows");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return BitParallelMatrix(rows.size(), rows.front().size(), bits, is_signed, std::move(flat));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  unsigned bits() const { return bits_; }
  bool is_signed() const { return signed_; }

  std::int64_t operator()(std::size_t r, std::size_t c) const { return elems_[r * cols_ + c]; }
  std::span<const std::int64_t> data() const { return elems_; }

  BitParallelMatrix transposed() const {
    std::vector<std::int64_t> t(rows_ * cols_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t[c * rows_ + r] = elems_[r * cols_ + c];
    return BitParallelMatrix(cols_, rows_, bits_, signed_, std::move(t));
  }

  /// Copy with extra zero rows/columns appended.
  BitParallelMatrix padded(std::size_t rows, std::size_t cols) const {
    if (rows < rows_ || cols < cols_) fail(ErrorKind::Dimension, "padding cannot shrink a matrix");
    std::vector<std::int64_t> p(rows * cols, 0);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) p[r * cols + c] = elems_[r * cols_ + c];
    return BitParallelMatrix(rows, cols, bits_, signed_, std::move(p));
  }

  friend bool operator==(const BitParallelMatrix&, const BitParallelMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  unsigned bits_ = 1;
  bool signed_ = false;
  std::vector<std::int64_t> elems_;
};

/// Stack of binary matrices ("bit planes"), one per bit position, in
/// [bits][rows][words] order. Bit c of word w in a row holds column
/// w * word_width + c; bits past the logical column count are zero.
class BitSerialMatrix {
 public:
  BitSerialMatrix() = default;

  BitSerialMatrix(std::size_t rows, std::size_t cols, unsigned bits, bool is_signed,
                  unsigned word_width = 64)
      : rows_(rows), cols_(cols), bits_(bits), signed_(is_signed), word_width_(word_width) {
    if (rows_ == 0 || cols_ == 0)
      fail(ErrorKind::Dimension, "matrix must have at least one row and one column");
    if (bits_ == 0 || bits_ > kMaxBits)
      fail(ErrorKind::Unsupported, "bit width " + std::to_string(bits_) + " outside 1..64");
    if (!is_pow2(word_width_) || word_width_ < 8 || word_width_ > 64)
      fail(ErrorKind::Unsupported, "word width must be a power of two in 8..64");
    words_per_row_ = ceil_div(cols_, word_width_);
    planes_.assign(bits_ * rows_ * words_per_row_, 0);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  unsigned bits() const { return bits_; }
  bool is_signed() const { return signed_; }
  unsigned word_width() const { return word_width_; }
  std::size_t words_per_row() const { return words_per_row_; }
  std::size_t stored_bits() const { return bits_ * rows_ * words_per_row_ * word_width_; }

  std::span<const std::uint64_t> row(unsigned plane, std::size_t r) const {
    return {planes_.data() + (plane * rows_ + r) * words_per_row_, words_per_row_};
  }

  bool get(unsigned plane, std::size_t r, std::size_t c) const {
    return (row(plane, r)[c / word_width_] >> (c % word_width_)) & 1u;
  }

  void set(unsigned plane, std::size_t r, std::size_t c, bool v) {
    std::uint64_t& w = planes_[(plane * rows_ + r) * words_per_row_ + c / word_width_];
    const std::uint64_t mask = std::uint64_t{1} << (c % word_width_);
    w = v ? (w | mask) : (w & ~mask);
  }

  /// Bit-level transpose; plane count, signedness and word width are kept.
  BitSerialMatrix transposed() const {
    BitSerialMatrix t(cols_, rows_, bits_, signed_, word_width_);
    for (unsigned b = 0; b < bits_; ++b)
      for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c)
          if (get(b, r, c)) t.set(b, c, r, true);
    return t;
  }

  friend bool operator==(const BitSerialMatrix&, const BitSerialMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  unsigned bits_ = 1;
  bool signed_ = false;
  unsigned word_width_ = 64;
  std::size_t words_per_row_ = 0;
  std::vector<std::uint64_t> planes_;
};

/// Bus widths of the parallel-to-serial converter.
struct LayoutParams {
  unsigned read_bus_bits = 64;   // F
  unsigned write_bus_bits = 64;  // R
  unsigned max_precision = 8;    // M

  void validate() const {
    if (!is_pow2(read_bus_bits) || read_bus_bits < 8)
      fail(ErrorKind::Unsupported, "read bus width must be a power of two >= 8");
    if (!is_pow2(write_bus_bits) || write_bus_bits < 8)
      fail(ErrorKind::Unsupported, "write bus width must be a power of two >= 8");
    if (max_precision < 1 || max_precision > kMaxBits)
      fail(ErrorKind::Unsupported, "max precision must be in 1..64");
  }
};

inline BitSerialMatrix decompose(const BitParallelMatrix& m, unsigned word_width = 64) {
  if (!is_pow2(word_width) || word_width < 8)
    fail(ErrorKind::Unsupported, "word width must be a power of two >= 8");
  BitSerialMatrix s(m.rows(), m.cols(), m.bits(), m.is_signed(), word_width);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const auto u = static_cast<std::uint64_t>(m(r, c));
      for (unsigned b = 0; b < m.bits(); ++b)
        if ((u >> b) & 1u) s.set(b, r, c, true);
    }
  return s;
}

inline BitParallelMatrix reconstruct(const BitSerialMatrix& s) {
  std::vector<std::int64_t> elems(s.rows() * s.cols(), 0);
  const unsigned top = s.bits() - 1;
  for (std::size_t r = 0; r < s.rows(); ++r)
    for (std::size_t c = 0; c < s.cols(); ++c) {
      std::uint64_t u = 0;
      for (unsigned b = 0; b < s.bits(); ++b)
        if (s.get(b, r, c)) u |= std::uint64_t{1} << b;
      // Signed: the MSB carries weight -2^(bits-1), i.e. sign extension.
      if (s.is_signed() && ((u >> top) & 1u) && s.bits() < 64) u |= ~std::uint64_t{0} << s.bits();
      elems[r * s.cols() + c] = static_cast<std::int64_t>(u);
    }
  return BitParallelMatrix(s.rows(), s.cols(), s.bits(), s.is_signed(), std::move(elems));
}

/// Plane-major bytes: plane 0 first, each plane row-major, each row padded
/// with zero columns to a multiple of `align_bits`. Column c of a row sits
/// at byte c / 8, bit c % 8.
inline std::vector<std::uint8_t> pack_planes(const BitParallelMatrix& m, unsigned align_bits) {
  if (align_bits == 0 || align_bits % 8 != 0)
    fail(ErrorKind::Unsupported, "alignment must be a positive multiple of 8 bits");
  const std::size_t row_bytes = round_up(m.cols(), align_bits) / 8;
  const std::size_t plane_bytes = row_bytes * m.rows();
  std::vector<std::uint8_t> out(plane_bytes * m.bits(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const auto u = static_cast<std::uint64_t>(m(r, c));
      for (unsigned b = 0; b < m.bits(); ++b)
        if ((u >> b) & 1u)
          out[b * plane_bytes + r * row_bytes + c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
    }
  return out;
}

inline BitParallelMatrix unpack_planes(std::span<const std::uint8_t> bytes, std::size_t rows,
                                       std::size_t cols, unsigned bits, bool is_signed,
                                       unsigned align_bits) {
  if (align_bits == 0 || align_bits % 8 != 0)
    fail(ErrorKind::Unsupported, "alignment must be a positive multiple of 8 bits");
  if (rows == 0 || cols == 0 || bits == 0 || bits > kMaxBits)
    fail(ErrorKind::Format, "invalid bit-serial matrix shape");
  const std::size_t row_bytes = round_up(cols, align_bits) / 8;
  const std::size_t plane_bytes = row_bytes * rows;
  if (bytes.size() != plane_bytes * bits)
    fail(ErrorKind::Format, "payload is " + std::to_string(bytes.size()) + " bytes, expected " +
                                std::to_string(plane_bytes * bits));
  BitSerialMatrix s(rows, cols, bits, is_signed, 64);
  for (unsigned b = 0; b < bits; ++b)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if ((bytes[b * plane_bytes + r * row_bytes + c / 8] >> (c % 8)) & 1u) s.set(b, r, c, true);
  return reconstruct(s);
}

/// Parallel-to-serial conversion into the converter's memory layout.
inline std::vector<std::uint8_t> p2s_pack(const BitParallelMatrix& m, const LayoutParams& lp) {
  lp.validate();
  if (m.bits() > lp.max_precision)
    fail(ErrorKind::Unsupported, "precision " + std::to_string(m.bits()) +
                                     " exceeds converter maximum " +
                                     std::to_string(lp.max_precision));
  return pack_planes(m, lp.write_bus_bits);
}

inline BitParallelMatrix p2s_unpack(std::span<const std::uint8_t> bytes, std::size_t rows,
                                    std::size_t cols, unsigned bits, bool is_signed,
                                    const LayoutParams& lp) {
  lp.validate();
  return unpack_planes(bytes, rows, cols, bits, is_signed, lp.write_bus_bits);
}

}  // namespace bismo
