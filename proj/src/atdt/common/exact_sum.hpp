#pragma once

#include <cmath>
#include <cstdint>

namespace atdt {

// Order-invariant accumulator for metric aggregation.
//
// Each term is quantized once to a fixed grid (2^-45) and summed in a
// 128-bit integer, so chunked accumulation and any permutation of the
// inputs produce the bit-identical double. Terms here are metric
// contributions bounded by ~1e4 in magnitude and counts up to ~1e9,
// far inside the integer range.
class ExactSum {
 public:
  void add(double x) { acc_ += static_cast<__int128>(std::llround(x * kScale)); }

  double value() const { return static_cast<double>(acc_) * kInvScale; }

  void merge(const ExactSum& other) { acc_ += other.acc_; }

  void reset() { acc_ = 0; }

 private:
  static constexpr double kScale = 35184372088832.0;  // 2^45
  static constexpr double kInvScale = 1.0 / kScale;
  __int128 acc_ = 0;
};

}  // namespace atdt
