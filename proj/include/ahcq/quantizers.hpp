#pragma once

// Scalar quantizer families: uniform, log2, biased log2 and the hybrid
// log/uniform quantizer (HLUQ). Codes are integers in [0, 2^k - 1]; all
// arithmetic on values is double precision and rounding ties go away from
// zero (std::round).
//
// HLUQ code layout for threshold b_hat:
//   code <  b_hat : log2 block,    value = offset + s1 * 2^-code
//   code >= b_hat : uniform block, value = offset + s1 + s2_step * (code - b_hat + 1)
// so the calibrated range r = s1 + s2_step * (2^k - b_hat) is reached by the
// top code, s1 itself is owned by log code 0 and no two codes share a value.
// Inputs within s2_step / 2 above s1 therefore round down to log code 0.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ahcq/error.hpp"

namespace ahcq {

enum class Scheme { uniform, log2, log2_biased, hluq };

inline std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::uniform: return "uniform";
    case Scheme::log2: return "log2";
    case Scheme::log2_biased: return "log2_biased";
    case Scheme::hluq: return "hluq";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "uniform") return Scheme::uniform;
  if (s == "log2") return Scheme::log2;
  if (s == "log2_biased") return Scheme::log2_biased;
  if (s == "hluq") return Scheme::hluq;
  throw ParameterError("unknown quantizer scheme '" + std::string(s) + "'");
}

inline void check_bits(int k) {
  if (k < 2 || k > 8) throw ParameterError("bit-width must be in 2..8, got " + std::to_string(k));
}

constexpr int max_code(int k) noexcept { return (1 << k) - 1; }

struct HluqConfig {
  double s1 = 1.0;       // full scale of the log2 block
  double s2_step = 1.0;  // step of the uniform block
  int b_hat = 1;         // first uniform code
  int k = 4;
  double offset = 0.0;   // subtracted before quantization

  int uniform_codes() const noexcept { return (1 << k) - b_hat; }
  double range() const noexcept { return s1 + s2_step * uniform_codes(); }

  void validate() const {
    check_bits(k);
    if (!(s1 > 0.0) || !std::isfinite(s1)) throw ParameterError("hluq s1 must be positive");
    if (!(s2_step > 0.0) || !std::isfinite(s2_step))
      throw ParameterError("hluq s2_step must be positive");
    if (b_hat < 1 || b_hat > max_code(k))
      throw ParameterError("hluq b_hat must be in [1, 2^k - 1], got " + std::to_string(b_hat));
    if (!std::isfinite(offset)) throw ParameterError("hluq offset must be finite");
  }

  /// Maps the calibration pair (alpha, beta) onto a config covering
  /// [offset, offset + range]: s1 = alpha * range, b_hat = beta * 2^k.
  static HluqConfig from_alpha_beta(double alpha, double beta, double range, int k, double offset) {
    check_bits(k);
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
    if (!(range > 0.0)) throw ParameterError("hluq range must be positive");
    const double b = beta * static_cast<double>(1 << k);
    const int b_hat = static_cast<int>(std::lround(b));
    if (std::abs(b - b_hat) > 1e-9 || b_hat < 1 || b_hat > max_code(k))
      throw ParameterError("beta * 2^k must be an integer in [1, 2^k - 1]");
    HluqConfig c;
    c.k = k;
    c.b_hat = b_hat;
    c.offset = offset;
    c.s1 = alpha * range;
    c.s2_step = (1.0 - alpha) * range / static_cast<double>((1 << k) - b_hat);
    c.validate();
    return c;
  }

  bool operator==(const HluqConfig&) const = default;
};

struct QuantParams {
  Scheme scheme = Scheme::uniform;
  int k = 8;
  double s = 1.0;
  int z = 0;
  double bias = 0.0;
  std::optional<HluqConfig> hluq;

  static QuantParams uniform(double s, int z, int k) {
    QuantParams p;
    p.scheme = Scheme::uniform;
    p.s = s;
    p.z = z;
    p.k = k;
    p.validate();
    return p;
  }
  static QuantParams log2(double s, int k) {
    QuantParams p;
    p.scheme = Scheme::log2;
    p.s = s;
    p.k = k;
    p.validate();
    return p;
  }
  static QuantParams log2_biased(double s, double bias, int k) {
    QuantParams p;
    p.scheme = Scheme::log2_biased;
    p.s = s;
    p.bias = bias;
    p.k = k;
    p.validate();
    return p;
  }
  static QuantParams from_hluq(const HluqConfig& c) {
    QuantParams p;
    p.scheme = Scheme::hluq;
    p.k = c.k;
    p.hluq = c;
    p.validate();
    return p;
  }

  void validate() const {
    check_bits(k);
    if ((scheme == Scheme::hluq) != hluq.has_value())
      throw ParameterError("hluq config must be present exactly when scheme is hluq");
    if (scheme == Scheme::hluq) {
      hluq->validate();
      if (hluq->k != k) throw ParameterError("hluq bit-width disagrees with params bit-width");
      return;
    }
    if (!(s > 0.0) || !std::isfinite(s)) throw ParameterError("scale must be positive and finite");
    if (scheme == Scheme::uniform && (z < 0 || z > max_code(k)))
      throw ParameterError("zero point must lie in [0, 2^k - 1]");
    if (!std::isfinite(bias)) throw ParameterError("bias must be finite");
  }

  bool operator==(const QuantParams&) const = default;
};

// ---------------------------------------------------------------------------
// Fake-quantization cores shared with reconstruction. `round` is a policy so
// the optimizer can replay a straight-through surrogate; Jacobian receives the
// straight-through partials (round treated as identity, clamp kept).
// Clamp tests sit half a code outside the band: identical for integer
// rounding, and a replayed surrogate keeps its branch under small moves.

struct FakeQuantJacobian {
  double dx = 0.0;   // d value / d input
  double dp0 = 0.0;  // uniform: d/ds     hluq: d/ds1
  double dp1 = 0.0;  // uniform: d/dzero  hluq: d/ds2_step
};

struct HardRound {
  double operator()(double u) const noexcept { return std::round(u); }
};

namespace detail {

template <class Round>
double uniform_fake_quant(double x, double s, double zero, int qmax, Round& round,
                          FakeQuantJacobian* jac, int* code = nullptr) {
  const double rz = round(zero);
  const double u = x / s;
  const double ru = round(u);
  const double q = ru + rz;
  double value;
  if (q < -0.5) {
    value = s * (0.0 - rz);
    if (jac) *jac = {0.0, -rz, -s};
    if (code) *code = 0;
  } else if (q > qmax + 0.5) {
    value = s * (qmax - rz);
    if (jac) *jac = {0.0, qmax - rz, -s};
    if (code) *code = qmax;
  } else {
    value = s * ru;
    if (jac) *jac = {1.0, ru - u, 0.0};
    if (code) *code = static_cast<int>(q);
  }
  return value;
}

template <class Round>
double log2_fake_quant(double y, double s, int top, Round& round, int* code, double* dvalue_dy) {
  int c;
  double dy = 0.0;
  if (y <= 0.0) {
    c = top;
  } else {
    const double v = -std::log2(y / s);
    const double rv = round(v);
    if (rv < -0.5) {
      c = 0;
    } else if (rv > top + 0.5) {
      c = top;
    } else {
      const double value = s * std::exp2(-rv);
      if (code) *code = static_cast<int>(rv);
      if (dvalue_dy) *dvalue_dy = value / y;
      return value;
    }
  }
  if (code) *code = c;
  if (dvalue_dy) *dvalue_dy = dy;
  return s * std::exp2(-static_cast<double>(c));
}

template <class Round>
double hluq_fake_quant(double x, double s1, double s2, double offset, int b_hat, int k, Round& round,
                       FakeQuantJacobian* jac, int* code = nullptr) {
  const double y = x - offset;
  const int n = (1 << k) - b_hat;
  if (y <= s1) {
    int c = 0;
    double dy = 0.0;
    const double value = log2_fake_quant(y, s1, b_hat - 1, round, &c, &dy);
    if (code) *code = c;
    if (jac) {
      // Unclamped log codes reproduce y * 2^-residual, independent of s1.
      const bool clamped = dy == 0.0;
      *jac = {dy, clamped ? std::exp2(-static_cast<double>(c)) : 0.0, 0.0};
    }
    return value + offset;
  }
  const double w = (y - s1) / s2;
  const double rw = round(w);
  if (rw > n + 0.5) {
    if (code) *code = b_hat - 1 + n;
    if (jac) *jac = {0.0, 1.0, static_cast<double>(n)};
    return s1 + s2 * n + offset;
  }
  if (rw < -0.5) {
    if (code) *code = 0;
    if (jac) *jac = {0.0, 1.0, 0.0};
    return s1 + offset;
  }
  if (code) *code = rw == 0.0 ? 0 : b_hat - 1 + static_cast<int>(rw);
  if (jac) *jac = {1.0, 0.0, rw - w};
  return s1 + s2 * rw + offset;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Code-level API.

inline int uniform_quant(double x, const QuantParams& p) {
  const double q = std::round(x / p.s) + p.z;
  return static_cast<int>(std::clamp(q, 0.0, static_cast<double>(max_code(p.k))));
}

inline double uniform_dequant(int code, const QuantParams& p) {
  return p.s * static_cast<double>(code - p.z);
}

/// Nonpositive inputs map to the largest code (the value closest to zero).
inline int log2_quant(double x, const QuantParams& p) {
  if (!(p.s > 0.0)) throw ParameterError("log2 scale must be positive");
  HardRound r;
  int code = 0;
  detail::log2_fake_quant(x, p.s, max_code(p.k), r, &code, nullptr);
  return code;
}

inline double log2_dequant(int code, const QuantParams& p) {
  return p.s * std::exp2(-static_cast<double>(code));
}

inline int log2_biased_quant(double x, const QuantParams& p) { return log2_quant(x - p.bias, p); }

inline double log2_biased_dequant(int code, const QuantParams& p) {
  return log2_dequant(code, p) + p.bias;
}

inline int hluq_quant(double x, const HluqConfig& c) {
  HardRound r;
  int code = 0;
  detail::hluq_fake_quant(x, c.s1, c.s2_step, c.offset, c.b_hat, c.k, r, nullptr, &code);
  return code;
}

inline double hluq_dequant(int code, const HluqConfig& c) {
  if (code < c.b_hat) return c.s1 * std::exp2(-static_cast<double>(code)) + c.offset;
  return c.s1 + c.s2_step * static_cast<double>(code - c.b_hat + 1) + c.offset;
}

inline int quantize(double x, const QuantParams& p) {
  switch (p.scheme) {
    case Scheme::uniform: return uniform_quant(x, p);
    case Scheme::log2: return log2_quant(x, p);
    case Scheme::log2_biased: return log2_biased_quant(x, p);
    case Scheme::hluq: return hluq_quant(x, *p.hluq);
  }
  throw ParameterError("unknown scheme");
}

inline double dequantize(int code, const QuantParams& p) {
  switch (p.scheme) {
    case Scheme::uniform: return uniform_dequant(code, p);
    case Scheme::log2: return log2_dequant(code, p);
    case Scheme::log2_biased: return log2_biased_dequant(code, p);
    case Scheme::hluq: return hluq_dequant(code, *p.hluq);
  }
  throw ParameterError("unknown scheme");
}

inline double fake_quant(double x, const QuantParams& p) { return dequantize(quantize(x, p), p); }

/// Dequantized value of every code, indexed by code.
inline std::vector<double> grid(const QuantParams& p) {
  std::vector<double> g(static_cast<std::size_t>(max_code(p.k)) + 1);
  for (int c = 0; c <= max_code(p.k); ++c) g[static_cast<std::size_t>(c)] = dequantize(c, p);
  return g;
}

}  // namespace ahcq
