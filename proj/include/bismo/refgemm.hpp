#pragma once

// Reference GEMM engines: plain integer, bit-serial (weighted sum of binary
// matrix products) and the wavefront-ordered variant used by the hardware DPU.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "bismo/bitmatrix.hpp"

namespace bismo {

__extension__ using i128 = __int128;

enum class AccMode : std::uint8_t { Zero, Keep, ShiftLeft1 };

inline const char* to_string(AccMode m) {
  switch (m) {
    case AccMode::Zero: return "zero";
    case AccMode::Keep: return "keep";
    case AccMode::ShiftLeft1: return "shl1";
  }
  return "?";
}

/// Result matrix of signed accumulators, semantically `acc_bits` wide.
class AccumMatrix {
 public:
  AccumMatrix() = default;
  AccumMatrix(std::size_t rows, std::size_t cols, unsigned acc_bits = 32)
      : rows_(rows), cols_(cols), acc_bits_(acc_bits), elems_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  unsigned acc_bits() const { return acc_bits_; }

  std::int64_t& operator()(std::size_t r, std::size_t c) { return elems_[r * cols_ + c]; }
  std::int64_t operator()(std::size_t r, std::size_t c) const { return elems_[r * cols_ + c]; }
  const std::vector<std::int64_t>& data() const { return elems_; }

  bool operator==(const AccumMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && elems_ == o.elems_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  unsigned acc_bits_ = 32;
  std::vector<std::int64_t> elems_;
};

namespace detail {


inline bool fits_accumulator(i128 v, unsigned acc_bits) {
  const i128 limit = static_cast<i128>(1) << (acc_bits - 1);
  return v < limit && v > -limit;
}

inline void check_acc_bits(unsigned acc_bits) {
  if (acc_bits < 2 || acc_bits > 64) fail(ErrorKind::Unsupported, "accumulator width must be 2..64");
}

[[noreturn]] inline void overflow_at(std::size_t m, std::size_t n, unsigned acc_bits) {
  fail(ErrorKind::Overflow, "accumulator overflow at (" + std::to_string(m) + ", " +
                                std::to_string(n) + ") for " + std::to_string(acc_bits) +
                                "-bit accumulator");
}

inline std::uint64_t popcount_and(std::span<const std::uint64_t> a,
                                  std::span<const std::uint64_t> b) {
  std::uint64_t acc = 0;
  for (std::size_t w = 0; w < a.size(); ++w) acc += std::popcount(a[w] & b[w]);
  return acc;
}

}  // namespace detail

/// Ground truth: P = L * R in exact integer arithmetic.
inline AccumMatrix gemm_naive(const BitParallelMatrix& lhs, const BitParallelMatrix& rhs,
                              unsigned acc_bits = 32) {
  detail::check_acc_bits(acc_bits);
  if (lhs.cols() != rhs.rows())
    fail(ErrorKind::Dimension, "inner dimensions differ: " + std::to_string(lhs.cols()) + " vs " +
                                   std::to_string(rhs.rows()));
  AccumMatrix p(lhs.rows(), rhs.cols(), acc_bits);
  for (std::size_t m = 0; m < lhs.rows(); ++m)
    for (std::size_t n = 0; n < rhs.cols(); ++n) {
      i128 acc = 0;
      for (std::size_t k = 0; k < lhs.cols(); ++k)
        acc += static_cast<i128>(lhs(m, k)) * rhs(k, n);
      if (!detail::fits_accumulator(acc, acc_bits)) detail::overflow_at(m, n, acc_bits);
      p(m, n) = static_cast<std::int64_t>(acc);
    }
  return p;
}

/// Whether the binary product of L plane i and R plane j enters with a
/// negative weight (two's complement MSB planes carry weight -2^(bits-1)).
inline bool plane_product_negated(unsigned i, unsigned j, unsigned lhs_bits, unsigned rhs_bits,
                                  bool lhs_signed, bool rhs_signed) {
  const bool neg_l = lhs_signed && i == lhs_bits - 1;
  const bool neg_r = rhs_signed && j == rhs_bits - 1;
  return neg_l != neg_r;
}

/// Weighted sum of l*r binary matrix products, bit positions in natural order.
inline AccumMatrix gemm_bitserial(const BitSerialMatrix& lhs, const BitSerialMatrix& rhs,
                                  unsigned acc_bits = 32) {
  detail::check_acc_bits(acc_bits);
  if (lhs.cols() != rhs.rows())
    fail(ErrorKind::Dimension, "inner dimensions differ: " + std::to_string(lhs.cols()) + " vs " +
                                   std::to_string(rhs.rows()));
  if (lhs.bits() + rhs.bits() > 120) fail(ErrorKind::Unsupported, "combined precision too large");
  // Column access of R becomes row access of R^T.
  const BitSerialMatrix lt = lhs.word_width() == 64 ? lhs : decompose(reconstruct(lhs));
  const BitSerialMatrix rt = decompose(reconstruct(rhs).transposed());
  const std::size_t rows = lhs.rows(), cols = rhs.cols();
  std::vector<i128> acc(rows * cols, 0);
  for (unsigned i = 0; i < lhs.bits(); ++i)
    for (unsigned j = 0; j < rhs.bits(); ++j) {
      const bool neg = plane_product_negated(i, j, lhs.bits(), rhs.bits(), lhs.is_signed(),
                                             rhs.is_signed());
      const i128 weight = (neg ? -1 : 1) * (static_cast<i128>(1) << (i + j));
      for (std::size_t m = 0; m < rows; ++m)
        for (std::size_t n = 0; n < cols; ++n)
          acc[m * cols + n] += weight * static_cast<i128>(
                                            detail::popcount_and(lt.row(i, m), rt.row(j, n)));
    }
  AccumMatrix p(rows, cols, acc_bits);
  for (std::size_t m = 0; m < rows; ++m)
    for (std::size_t n = 0; n < cols; ++n) {
      const i128 v = acc[m * cols + n];
      if (!detail::fits_accumulator(v, acc_bits)) detail::overflow_at(m, n, acc_bits);
      p(m, n) = static_cast<std::int64_t>(v);
    }
  return p;
}

/// One binary plane product in the wavefront traversal.
struct WavefrontStep {
  unsigned i = 0;  // L bit position
  unsigned j = 0;  // R bit position
  bool negate = false;
  AccMode acc_mode = AccMode::Keep;

  friend bool operator==(const WavefrontStep&, const WavefrontStep&) = default;
};

/// Bit-position pairs grouped by i + j, highest wavefront first. Moving to
/// the next (lower) wavefront doubles the accumulator, so each contribution
/// ends up scaled by exactly 2^(i+j). Within a wavefront, i ascends.
inline std::vector<WavefrontStep> wavefront_schedule(unsigned lhs_bits, unsigned rhs_bits,
                                                     bool lhs_signed, bool rhs_signed) {
  if (lhs_bits == 0 || rhs_bits == 0) fail(ErrorKind::Unsupported, "bit widths must be >= 1");
  std::vector<WavefrontStep> steps;
  steps.reserve(std::size_t{lhs_bits} * rhs_bits);
  const unsigned top = (lhs_bits - 1) + (rhs_bits - 1);
  for (unsigned s = top + 1; s-- > 0;) {
    bool first_in_front = true;
    const unsigned i_lo = s >= rhs_bits - 1 ? s - (rhs_bits - 1) : 0;
    const unsigned i_hi = std::min(s, lhs_bits - 1);
    for (unsigned i = i_lo; i <= i_hi; ++i) {
      WavefrontStep st;
      st.i = i;
      st.j = s - i;
      st.negate = plane_product_negated(st.i, st.j, lhs_bits, rhs_bits, lhs_signed, rhs_signed);
      if (steps.empty())
        st.acc_mode = AccMode::Zero;
      else
        st.acc_mode = first_in_front ? AccMode::ShiftLeft1 : AccMode::Keep;
      first_in_front = false;
      steps.push_back(st);
    }
  }
  return steps;
}

/// Accumulator update of one DPU step, with A-bit overflow detection.
/// Returns false on overflow.
inline bool dpu_accumulate(std::int64_t& acc, std::int64_t contribution, bool negate,
                           AccMode mode, unsigned acc_bits) {
  i128 base = 0;
  switch (mode) {
    case AccMode::Zero: base = 0; break;
    case AccMode::Keep: base = acc; break;
    case AccMode::ShiftLeft1: base = static_cast<i128>(acc) * 2; break;
  }
  const i128 v = base + (negate ? -static_cast<i128>(contribution) : contribution);
  if (!detail::fits_accumulator(v, acc_bits)) return false;
  acc = static_cast<std::int64_t>(v);
  return true;
}

/// Bit-serial GEMM replayed in wavefront order with shift-by-one accumulation.
inline AccumMatrix gemm_wavefront(const BitSerialMatrix& lhs, const BitSerialMatrix& rhs,
                                  unsigned acc_bits = 32) {
  detail::check_acc_bits(acc_bits);
  if (lhs.cols() != rhs.rows())
    fail(ErrorKind::Dimension, "inner dimensions differ: " + std::to_string(lhs.cols()) + " vs " +
                                   std::to_string(rhs.rows()));
  const BitSerialMatrix lt = lhs.word_width() == 64 ? lhs : decompose(reconstruct(lhs));
  const BitSerialMatrix rt = decompose(reconstruct(rhs).transposed());
  const auto steps =
      wavefront_schedule(lhs.bits(), rhs.bits(), lhs.is_signed(), rhs.is_signed());
  AccumMatrix p(lhs.rows(), rhs.cols(), acc_bits);
  for (std::size_t m = 0; m < p.rows(); ++m)
    for (std::size_t n = 0; n < p.cols(); ++n) {
      std::int64_t acc = 0;
      for (const auto& st : steps) {
        const auto c = static_cast<std::int64_t>(detail::popcount_and(lt.row(st.i, m), rt.row(st.j, n)));
        if (!dpu_accumulate(acc, c, st.negate, st.acc_mode, acc_bits))
          detail::overflow_at(m, n, acc_bits);
      }
      p(m, n) = acc;
    }
  return p;
}

/// Binary operation count (AND + popcount as multiply + add).
inline std::uint64_t count_binary_ops(std::uint64_t rows, std::uint64_t depth, std::uint64_t cols,
                                      unsigned lhs_bits, unsigned rhs_bits) {
  return 2 * rows * depth * cols * lhs_bits * rhs_bits;
}

}  // namespace bismo
