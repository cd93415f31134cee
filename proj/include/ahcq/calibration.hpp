#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "ahcq/error.hpp"
#include "ahcq/quantize_tensor.hpp"
#include "ahcq/quantizers.hpp"
#include "ahcq/tensor.hpp"

namespace ahcq::calibration {

/// Asymmetric MinMax parameters for [lo, hi]. The range is widened to contain
/// zero so the integer zero point always lands on the grid; an all-zero range
/// falls back to s = 1, z = 0.
inline QuantParams minmax_params(double lo, double hi, int k) {
  check_bits(k);
  lo = std::min(lo, 0.0);
  hi = std::max(hi, 0.0);
  const int qmax = max_code(k);
  if (hi - lo <= 0.0) return QuantParams::uniform(1.0, 0, k);
  const double s = (hi - lo) / qmax;
  const int z = static_cast<int>(std::clamp(std::round(-lo / s), 0.0, static_cast<double>(qmax)));
  return QuantParams::uniform(s, z, k);
}

inline ParamSet minmax_init(const Tensor& t, int k, Granularity g) {
  if (t.empty()) throw DomainError("minmax_init of an empty tensor");
  const auto stats = channel_stats(t);
  if (g == Granularity::per_tensor) {
    const float lo = *std::min_element(stats.min.begin(), stats.min.end());
    const float hi = *std::max_element(stats.max.begin(), stats.max.end());
    return ParamSet::per_tensor(minmax_params(lo, hi, k));
  }
  if (g == Granularity::per_group)
    throw ParameterError("per-group parameters come from channel-aware grouping, not MinMax");
  std::vector<QuantParams> ps;
  ps.reserve(stats.channels());
  for (std::size_t c = 0; c < stats.channels(); ++c) ps.push_back(minmax_params(stats.min[c], stats.max[c], k));
  return ParamSet::per_channel(std::move(ps));
}

// ---------------------------------------------------------------------------
// MSE scale search for one uniform unit (tensor, group or channel).

struct UnitFit {
  QuantParams params;
  double sse = 0.0;  // sum of squared errors over the unit
};

inline double unit_sse(std::span<const double> values, const QuantParams& p) {
  double acc = 0.0;
  for (double x : values) {
    const double e = x - fake_quant(x, p);
    acc += e * e;
  }
  return acc;
}

/// Candidates: the MinMax init, then 64 scales evenly spaced over
/// [0.5, 1.5] x the MinMax scale; z = round(-lo / s) for each. First best wins.
inline UnitFit search_unit(std::span<const double> values, int k, int candidates = 64) {
  if (values.empty()) throw DomainError("search over an empty unit");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = std::min(*mn, 0.0);
  const QuantParams init = minmax_params(*mn, *mx, k);
  UnitFit best{init, unit_sse(values, init)};
  if (*mx - *mn <= 0.0 && *mx == 0.0) return best;
  const int qmax = max_code(k);
  for (int i = 0; i < candidates; ++i) {
    const double f = 0.5 + static_cast<double>(i) / static_cast<double>(candidates - 1);
    const double s = init.s * f;
    const int z = static_cast<int>(std::clamp(std::round(-lo / s), 0.0, static_cast<double>(qmax)));
    const auto p = QuantParams::uniform(s, z, k);
    const double e = unit_sse(values, p);
    if (e < best.sse) best = {p, e};
  }
  return best;
}

/// Values of every channel gathered into contiguous vectors.
inline std::vector<std::vector<double>> split_channels(const Tensor& t) {
  std::vector<std::vector<double>> out(t.channels());
  for (auto& v : out) v.reserve(t.size() / t.channels());
  for (std::size_t i = 0; i < t.size(); ++i) out[t.channel_of(i)].push_back(t[i]);
  return out;
}

/// MSE-searched parameters at per-tensor or per-channel granularity.
inline ParamSet mse_init(const Tensor& t, int k, Granularity g) {
  if (g == Granularity::per_tensor) {
    std::vector<double> all(t.data().begin(), t.data().end());
    return ParamSet::per_tensor(search_unit(all, k).params);
  }
  if (g == Granularity::per_group)
    throw ParameterError("per-group parameters come from channel-aware grouping");
  std::vector<QuantParams> ps;
  for (const auto& ch : split_channels(t)) ps.push_back(search_unit(ch, k).params);
  return ParamSet::per_channel(std::move(ps));
}

// ---------------------------------------------------------------------------
// HLUQ (alpha, beta) calibration.

struct HluqSearchSpace {
  std::vector<double> alphas{0.1, 0.3, 0.5};
  std::vector<double> betas{0.5, 0.25, 0.125};
  /// Fractions of the calibrated range to try as the HLUQ full scale; {1}
  /// searches only (alpha, beta) over the unclipped range.
  std::vector<double> range_fractions{1.0};

  static HluqSearchSpace standard() { return {}; }

  /// alpha in {0.1, ..., 0.9}; beta stays on the power-of-two ladder.
  static HluqSearchSpace extended() {
    HluqSearchSpace s;
    s.alphas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    return s;
  }

  void validate() const {
    if (alphas.empty() || betas.empty() || range_fractions.empty())
      throw ParameterError("hluq search grid is empty");
    for (double a : alphas)
      if (!(a > 0.0 && a < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
    for (double b : betas)
      if (!(b > 0.0 && b < 1.0)) throw ParameterError("beta must lie in (0, 1)");
    for (double f : range_fractions)
      if (!(f > 0.0 && f <= 1.0)) throw ParameterError("range fraction must lie in (0, 1]");
  }
};

struct HluqGridPoint {
  double alpha = 0.0;
  double beta = 0.0;
  double range_fraction = 1.0;
  bool valid = false;  // beta * 2^k lands on an integer threshold
  double objective = std::numeric_limits<double>::infinity();
};

struct HluqSearchResult {
  HluqConfig config;
  HluqGridPoint best;
  std::vector<HluqGridPoint> grid;
};

/// Precomputed pieces of the calibration objective for one batch.
struct HluqBatch {
  const Tensor* x = nullptr;
};

/// || X W - Xq W ||_F^2 with Xq the HLUQ fake-quantized X; products and the
/// reduction run in double, rows and columns in ascending order.
inline double hluq_objective(const Tensor& x, const Tensor& w, const HluqConfig& cfg) {
  if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.rows())
    throw ShapeError("hluq objective needs X[N,K] and W[K,M]");
  const std::size_t n = x.rows(), kdim = x.cols(), m = w.cols();
  std::vector<double> err(kdim);
  double total = 0.0;
  const auto xv = x.data();
  const auto wv = w.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < kdim; ++p) {
      const double v = xv[i * kdim + p];
      err[p] = v - hluq_dequant(hluq_quant(v, cfg), cfg);
    }
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < kdim; ++p) acc += err[p] * static_cast<double>(wv[p * m + j]);
      total += acc * acc;
    }
  }
  return total;
}

/// Grid search minimizing the mean over batches of ||X W - Xq W||_F^2.
/// offset = calibration min, r = (max - min) * range_fraction,
/// s1 = alpha r, b_hat = beta 2^k. Ties prefer smaller alpha, then smaller
/// beta, then the larger range fraction.
inline HluqSearchResult hluq_search(std::span<const Tensor> batches, const Tensor& w, int k,
                                    const HluqSearchSpace& space) {
  space.validate();
  check_bits(k);
  if (batches.empty()) throw ParameterError("hluq search needs calibration batches");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& b : batches)
    for (float v : b.data()) {
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
    }
  const double range = hi - lo;
  if (!(range > 0.0)) throw DomainError("hluq search over a constant calibration set");

  auto alphas = space.alphas;
  auto betas = space.betas;
  auto fractions = space.range_fractions;
  std::sort(alphas.begin(), alphas.end());
  std::sort(betas.begin(), betas.end());
  std::sort(fractions.begin(), fractions.end(), std::greater<>());

  HluqSearchResult result;
  bool found = false;
  for (double a : alphas) {
    for (double b : betas) {
      for (double f : fractions) {
        HluqGridPoint pt{a, b, f, false, std::numeric_limits<double>::infinity()};
        const double bh = b * static_cast<double>(1 << k);
        if (std::abs(bh - std::round(bh)) < 1e-9 && bh >= 1.0 && bh <= max_code(k)) {
          pt.valid = true;
          const auto cfg = HluqConfig::from_alpha_beta(a, b, range * f, k, lo);
          double sum = 0.0;
          for (const auto& x : batches) sum += hluq_objective(x, w, cfg);
          pt.objective = sum / static_cast<double>(batches.size());
          if (!found || pt.objective < result.best.objective) {
            result.best = pt;
            result.config = cfg;
            found = true;
          }
        }
        result.grid.push_back(pt);
      }
    }
  }
  if (!found) throw ParameterError("no valid (alpha, beta) point for bit-width " + std::to_string(k));
  return result;
}

inline HluqSearchResult hluq_search(const Tensor& x, const Tensor& w, int k, const HluqSearchSpace& space) {
  return hluq_search(std::span<const Tensor>(&x, 1), w, k, space);
}

// ---------------------------------------------------------------------------
// Exhaustive per-tensor scale scans used as quantizer baselines.

/// Best asymmetric uniform quantizer over scales s_i = (i / n) (max - min) / (2^k - 1).
inline UnitFit scan_uniform(std::span<const double> values, int k, int n = 256) {
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = std::min(*mn, 0.0), hi = std::max(*mx, 0.0);
  const int qmax = max_code(k);
  UnitFit best{minmax_params(lo, hi, k), std::numeric_limits<double>::infinity()};
  for (int i = 1; i <= n; ++i) {
    const double s = (hi - lo) / qmax * static_cast<double>(i) / n;
    if (!(s > 0.0)) continue;
    const int z = static_cast<int>(std::clamp(std::round(-lo / s), 0.0, static_cast<double>(qmax)));
    const auto p = QuantParams::uniform(s, z, k);
    const double e = unit_sse(values, p);
    if (e < best.sse) best = {p, e};
  }
  return best;
}

/// Best log2 quantizer with bias = calibrated min over scales s_i = (i / n) (max - min).
inline UnitFit scan_log2_biased(std::span<const double> values, int k, int n = 256) {
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double range = *mx - *mn;
  UnitFit best{QuantParams::log2_biased(1.0, *mn, k), std::numeric_limits<double>::infinity()};
  if (!(range > 0.0)) return {best.params, unit_sse(values, best.params)};
  for (int i = 1; i <= n; ++i) {
    const auto p = QuantParams::log2_biased(range * static_cast<double>(i) / n, *mn, k);
    const double e = unit_sse(values, p);
    if (e < best.sse) best = {p, e};
  }
  return best;
}

// ---------------------------------------------------------------------------
// Inter-sample stability of per-channel parameters.

/// [samples x channels] table of searched (s, z) pairs.
struct ChannelParamMatrix {
  std::size_t samples = 0;
  std::size_t channels = 0;
  std::vector<double> s;  // row-major [sample][channel]
  std::vector<double> z;

  double scale(std::size_t i, std::size_t c) const { return s[i * channels + c]; }
  double zero(std::size_t i, std::size_t c) const { return z[i * channels + c]; }
};

inline ChannelParamMatrix per_channel_search(std::span<const Tensor> samples, int k) {
  if (samples.size() < 2) throw ParameterError("per-channel search needs at least two samples");
  ChannelParamMatrix m;
  m.samples = samples.size();
  m.channels = samples.front().channels();
  for (const auto& t : samples) {
    if (t.channels() != m.channels) throw ShapeError("samples disagree on channel count");
    for (const auto& ch : split_channels(t)) {
      const auto fit = search_unit(ch, k);
      m.s.push_back(fit.params.s);
      m.z.push_back(fit.params.z);
    }
  }
  return m;
}

struct CosineReport {
  /// Mean pairwise cosine similarity per channel; NaN when fewer than two
  /// nonzero vectors remain for that channel.
  std::vector<double> per_channel;
  std::size_t excluded = 0;  // zero vectors skipped
};

inline CosineReport cosine_similarity(const ChannelParamMatrix& m) {
  if (m.samples < 2) throw ParameterError("cosine similarity needs at least two samples");
  CosineReport out{std::vector<double>(m.channels), 0};
  for (std::size_t c = 0; c < m.channels; ++c) {
    std::vector<std::pair<double, double>> unit;
    for (std::size_t i = 0; i < m.samples; ++i) {
      const double a = m.scale(i, c), b = m.zero(i, c);
      const double norm = std::hypot(a, b);
      if (norm == 0.0) {
        ++out.excluded;
        continue;
      }
      unit.emplace_back(a / norm, b / norm);
    }
    if (unit.size() < 2) {
      out.per_channel[c] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < unit.size(); ++i)
      for (std::size_t j = i + 1; j < unit.size(); ++j) {
        acc += unit[i].first * unit[j].first + unit[i].second * unit[j].second;
        ++pairs;
      }
    out.per_channel[c] = std::clamp(acc / static_cast<double>(pairs), -1.0, 1.0);
  }
  return out;
}

}  // namespace ahcq::calibration
