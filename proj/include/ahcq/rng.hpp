#pragma once

// Counter-based pseudo-random source used for every fixture.
//
// Draw i of stream (seed, stream) is a pure function of its inputs:
//
//   mix(x)  = SplitMix64 finalizer:
//               x ^= x >> 30; x *= 0xBF58476D1CE4E5B9
//               x ^= x >> 27; x *= 0x94D049BB133111EB
//               x ^= x >> 31
//   key     = mix(seed ^ mix(stream + 0x9E3779B97F4A7C15))
//   u64(i)  = mix(key + (i + 1) * 0x9E3779B97F4A7C15)        (mod 2^64)
//   unit(i) = ((u64(i) >> 11) + 0.5) * 2^-53                 in (0, 1)
//
// Normal draws invert the Gaussian CDF with Acklam's rational approximation
// (coefficients below, |relative error| < 1.15e-9); no rejection sampling, so
// draw i always consumes exactly counter i.

#include <array>
#include <cmath>
#include <cstdint>

namespace ahcq::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

inline double inverse_normal_cdf(double p) noexcept {
  static constexpr std::array<double, 6> a = {-3.969683028665376e+01, 2.209460984245205e+02,
                                              -2.759285104469687e+02, 1.383577518672690e+02,
                                              -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr std::array<double, 5> b = {-5.447609879822406e+01, 1.615858368580409e+02,
                                              -1.556989798598866e+02, 6.680131188771972e+01,
                                              -1.328068155288572e+01};
  static constexpr std::array<double, 6> c = {-7.784894002430293e-03, -3.223964580411365e-01,
                                              -2.400758277161838e+00, -2.549732539343734e+00,
                                              4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr std::array<double, 4> d = {7.784695709041462e-03, 3.224671290700398e-01,
                                              2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  constexpr double p_high = 1.0 - p_low;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > p_high) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

/// Sequential view over one counter-based stream.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(mix(seed ^ mix(stream + kGolden))) {}

  std::uint64_t u64_at(std::uint64_t i) const noexcept { return mix(key_ + (i + 1) * kGolden); }

  std::uint64_t next_u64() noexcept { return u64_at(counter_++); }

  double uniform() noexcept {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept { return inverse_normal_cdf(uniform()); }

  /// Uniform integer in [0, n) by multiply-shift on the top 32 bits.
  std::uint64_t below(std::uint64_t n) noexcept {
    return ((next_u64() >> 32) * n) >> 32;
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ahcq::rng
