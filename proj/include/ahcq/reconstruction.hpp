#pragma once

// Block-wise reconstruction of a toy MLP block
//
//   X -> Q_in -> (. W1q + b1) -> GELU -> Q_mid -> (. W2q + b2) -> O
//
// Q_in is uniform with per-unit (channel, group or tensor) parameters,
// Q_mid is HLUQ or per-tensor uniform, weights are uniform per output
// channel (or per weight group) with a bounded additive perturbation
// measured in quantization steps: W + s * V, |V| <= 1/2.
// Scales are learned in log space; zero points are continuous and rounded
// with a straight-through estimator.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <algorithm>
#include <string>
#include <vector>

#include "ahcq/cag.hpp"
#include "ahcq/calibration.hpp"
#include "ahcq/datagen.hpp"
#include "ahcq/error.hpp"
#include "ahcq/kv.hpp"
#include "ahcq/quantizers.hpp"
#include "ahcq/tensor.hpp"

namespace ahcq::recon {

struct ToyBlock {
  Tensor w1;  // [C, H]
  Tensor b1;  // [H]
  Tensor w2;  // [H, C]
  Tensor b2;  // [C]

  std::size_t channels() const { return w1.rows(); }
  std::size_t hidden() const { return w1.cols(); }

  void validate() const {
    if (w1.rank() != 2 || w2.rank() != 2) throw ShapeError("block weights must be matrices");
    const std::size_t c = w1.rows(), h = w1.cols();
    if (w2.rows() != h || w2.cols() != c) throw ShapeError("W2 must be [H, C] for W1 [C, H]");
    if (b1.size() != h || b2.size() != c) throw ShapeError("bias lengths must match H and C");
  }

  static ToyBlock from_fixture(const datagen::ToyBlockFixture& f) {
    ToyBlock b{f.w1, f.b1, f.w2, f.b2};
    b.validate();
    return b;
  }
};

enum class MidScheme { hluq, uniform };

inline std::string_view to_string(MidScheme m) { return m == MidScheme::hluq ? "hluq" : "uniform"; }

inline MidScheme parse_mid_scheme(std::string_view s) {
  if (s == "hluq") return MidScheme::hluq;
  if (s == "uniform") return MidScheme::uniform;
  throw ConfigError("unknown post-GELU scheme '" + std::string(s) + "'");
}

/// Uniform quantizer parameters shared by units of channels.
struct UniformSite {
  std::vector<double> log_s;
  std::vector<double> zero;
  std::vector<int> unit_of;  // channel -> unit

  std::size_t units() const noexcept { return log_s.size(); }
  std::size_t channels() const noexcept { return unit_of.size(); }

  std::vector<double> scales() const {
    std::vector<double> s(log_s.size());
    for (std::size_t u = 0; u < s.size(); ++u) s[u] = std::exp(log_s[u]);
    return s;
  }

  void set_units(const std::vector<QuantParams>& ps, std::vector<int> map) {
    log_s.clear();
    zero.clear();
    for (const auto& p : ps) {
      log_s.push_back(std::log(p.s));
      zero.push_back(p.z);
    }
    unit_of = std::move(map);
  }

  bool operator==(const UniformSite&) const = default;
};

struct HluqSite {
  double log_s1 = 0.0;
  double log_s2 = 0.0;
  double offset = 0.0;
  int b_hat = 1;

  HluqConfig config(int k) const {
    return HluqConfig{std::exp(log_s1), std::exp(log_s2), b_hat, k, offset};
  }
  bool operator==(const HluqSite&) const = default;
};

struct Setup {
  int k_a = 4;
  int k_w = 4;
  bool quant_input = true;
  bool quant_mid = true;
  bool quant_weights = true;
  MidScheme mid = MidScheme::hluq;
};

struct Learnables {
  UniformSite in;   // over the C input channels
  UniformSite mid;  // uniform post-GELU site, one unit over H
  HluqSite hluq;
  UniformSite w1;   // over the H output channels of W1
  UniformSite w2;   // over the C output channels of W2
  std::vector<double> d1;  // perturbation of W1 in steps of its unit scale, [C, H]
  std::vector<double> d2;  // perturbation of W2, [H, C]

  bool operator==(const Learnables&) const = default;
};

struct ReconState {
  Setup setup;
  Learnables p;
  int iteration = 0;
  std::vector<double> loss_history;
};

enum class ScalarClass { scale, zero, delta };

/// Visits every learnable scalar of the active sites in a fixed order.
template <class L, class F>
void for_each_scalar(const Setup& setup, L& p, F&& f) {
  auto site = [&](auto& s) {
    for (auto& v : s.log_s) f(v, ScalarClass::scale);
    for (auto& v : s.zero) f(v, ScalarClass::zero);
  };
  if (setup.quant_input) site(p.in);
  if (setup.quant_mid) {
    if (setup.mid == MidScheme::hluq) {
      f(p.hluq.log_s1, ScalarClass::scale);
      f(p.hluq.log_s2, ScalarClass::scale);
    } else {
      site(p.mid);
    }
  }
  if (setup.quant_weights) {
    site(p.w1);
    site(p.w2);
  }
  for (auto& v : p.d1) f(v, ScalarClass::delta);
  for (auto& v : p.d2) f(v, ScalarClass::delta);
}

// ---------------------------------------------------------------------------
// Forward passes.

/// Intermediates kept for the backward pass. Jacobian entries hold the
/// straight-through partials of each fake-quantized element.
struct Cache {
  std::size_t n = 0;
  std::vector<double> xq, jin_s, jin_z;                 // [N, C]
  std::vector<double> w1q, jw1_x, jw1_s, jw1_z;         // [C, H]
  std::vector<double> a, gq, jmid_x, jmid_0, jmid_1;    // [N, H]
  std::vector<double> w2q, jw2_x, jw2_s, jw2_z;         // [H, C]
  std::vector<double> out;                              // [N, C]
};

namespace detail {

template <class Round>
void quant_weights(const Tensor& w, const std::vector<double>& d, const UniformSite& site, int k, bool on,
                   Round& round, std::vector<double>& q, std::vector<double>* jx, std::vector<double>* js,
                   std::vector<double>* jz, std::vector<int>* codes) {
  const std::size_t rows = w.rows(), cols = w.cols();
  q.resize(rows * cols);
  if (jx) jx->assign(rows * cols, 1.0), js->assign(rows * cols, 0.0), jz->assign(rows * cols, 0.0);
  const auto s = site.scales();
  const auto wv = w.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      if (!on) {
        q[i] = static_cast<double>(wv[i]) + d[i];
        continue;
      }
      const auto u = static_cast<std::size_t>(site.unit_of[c]);
      const double v = static_cast<double>(wv[i]) + s[u] * d[i];
      FakeQuantJacobian j;
      int code = 0;
      q[i] = ahcq::detail::uniform_fake_quant(v, s[u], site.zero[u], max_code(k), round, &j, &code);
      if (codes) codes->push_back(code);
      // the scale also moves the perturbed input: d v / d s = d[i]
      if (jx) (*jx)[i] = j.dx, (*js)[i] = j.dp0 + j.dx * d[i], (*jz)[i] = j.dp1;
    }
}

}  // namespace detail

/// Quantized block output for X [N, C]. Rounding goes through `round`, so a
/// recorded tape can replay a differentiable surrogate. `codes` (optional)
/// receives every emitted code in evaluation order.
template <class Round>
std::vector<double> forward(const ToyBlock& b, const Tensor& x, const ReconState& st, Round& round,
                            Cache* cache = nullptr, std::vector<int>* codes = nullptr) {
  if (x.rank() != 2 || x.cols() != b.channels())
    throw ShapeError("block input must be [N, " + std::to_string(b.channels()) + "]");
  const auto& S = st.setup;
  const auto& P = st.p;
  const std::size_t n = x.rows(), C = b.channels(), H = b.hidden();

  Cache local;
  Cache& c = cache ? *cache : local;
  const bool keep = cache != nullptr;
  c.n = n;

  detail::quant_weights(b.w1, P.d1, P.w1, S.k_w, S.quant_weights, round, c.w1q, keep ? &c.jw1_x : nullptr,
                        &c.jw1_s, &c.jw1_z, codes);
  detail::quant_weights(b.w2, P.d2, P.w2, S.k_w, S.quant_weights, round, c.w2q, keep ? &c.jw2_x : nullptr,
                        &c.jw2_s, &c.jw2_z, codes);

  // input site
  c.xq.resize(n * C);
  if (keep) c.jin_s.assign(n * C, 0.0), c.jin_z.assign(n * C, 0.0);
  {
    const auto s = P.in.scales();
    const auto xv = x.data();
    for (std::size_t i = 0; i < n * C; ++i) {
      const double v = xv[i];
      if (!S.quant_input) {
        c.xq[i] = v;
        continue;
      }
      const auto u = static_cast<std::size_t>(P.in.unit_of[i % C]);
      FakeQuantJacobian j;
      int code = 0;
      c.xq[i] = ahcq::detail::uniform_fake_quant(v, s[u], P.in.zero[u], max_code(S.k_a), round, &j, &code);
      if (codes) codes->push_back(code);
      if (keep) c.jin_s[i] = j.dp0, c.jin_z[i] = j.dp1;
    }
  }

  // linear 1 + GELU + post-GELU site
  c.a.resize(n * H);
  c.gq.resize(n * H);
  if (keep) c.jmid_x.assign(n * H, 1.0), c.jmid_0.assign(n * H, 0.0), c.jmid_1.assign(n * H, 0.0);
  const auto b1 = b.b1.data();
  const HluqConfig hc = S.mid == MidScheme::hluq ? P.hluq.config(S.k_a) : HluqConfig{};
  const double mid_s = S.mid == MidScheme::uniform && S.quant_mid ? std::exp(P.mid.log_s[0]) : 1.0;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t h = 0; h < H; ++h) {
      double acc = 0.0;
      for (std::size_t k = 0; k < C; ++k) acc += c.xq[r * C + k] * c.w1q[k * H + h];
      const std::size_t i = r * H + h;
      c.a[i] = acc + static_cast<double>(b1[h]);
      const double g = datagen::gelu(c.a[i]);
      if (!S.quant_mid) {
        c.gq[i] = g;
        continue;
      }
      FakeQuantJacobian j;
      int code = 0;
      if (S.mid == MidScheme::hluq)
        c.gq[i] = ahcq::detail::hluq_fake_quant(g, hc.s1, hc.s2_step, hc.offset, hc.b_hat, hc.k, round, &j, &code);
      else
        c.gq[i] = ahcq::detail::uniform_fake_quant(g, mid_s, P.mid.zero[0], max_code(S.k_a), round, &j, &code);
      if (codes) codes->push_back(code);
      if (keep) c.jmid_x[i] = j.dx, c.jmid_0[i] = j.dp0, c.jmid_1[i] = j.dp1;
    }

  // linear 2
  c.out.resize(n * C);
  const auto b2 = b.b2.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t m = 0; m < C; ++m) {
      double acc = 0.0;
      for (std::size_t h = 0; h < H; ++h) acc += c.gq[r * H + h] * c.w2q[h * C + m];
      c.out[r * C + m] = acc + static_cast<double>(b2[m]);
    }
  return c.out;
}

/// State with every quantizer bypassed and zero perturbations.
inline ReconState bypass_state(const ToyBlock& b) {
  ReconState st;
  st.setup.quant_input = st.setup.quant_mid = st.setup.quant_weights = false;
  st.p.d1.assign(b.w1.size(), 0.0);
  st.p.d2.assign(b.w2.size(), 0.0);
  return st;
}

/// Floating-point block output (exact GELU).
inline std::vector<double> forward_fp(const ToyBlock& b, const Tensor& x) {
  HardRound r;
  return forward(b, x, bypass_state(b), r);
}

inline std::vector<double> forward_quant(const ToyBlock& b, const Tensor& x, const ReconState& st) {
  HardRound r;
  return forward(b, x, st, r);
}

/// Sum of squared differences in ascending index order.
inline double block_loss(const std::vector<double>& o, const std::vector<double>& oq) {
  if (o.size() != oq.size()) throw ShapeError("block loss operands differ in size");
  double acc = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double d = o[i] - oq[i];
    acc += d * d;
  }
  return acc;
}

inline double block_loss(const Tensor& o, const Tensor& oq) {
  if (o.dims() != oq.dims()) throw ShapeError("block loss operands differ in shape");
  return block_loss(std::vector<double>(o.data().begin(), o.data().end()),
                    std::vector<double>(oq.data().begin(), oq.data().end()));
}

// ---------------------------------------------------------------------------
// Straight-through gradients.

/// Records round(u) - u on a first pass and replays u + residual afterwards,
/// giving a smooth surrogate whose exact derivative is the straight-through
/// gradient at the recorded point.
class RoundingTape {
 public:
  double operator()(double u) {
    if (recording_) {
      const double r = std::round(u);
      residual_.push_back(r - u);
      return r;
    }
    if (pos_ >= residual_.size()) throw SimulationError("rounding tape exhausted");
    return u + residual_[pos_++];
  }
  void replay() noexcept {
    recording_ = false;
    pos_ = 0;
  }
  std::size_t size() const noexcept { return residual_.size(); }

 private:
  std::vector<double> residual_;
  std::size_t pos_ = 0;
  bool recording_ = true;
};

inline Learnables zero_like(const Learnables& p) {
  Learnables g = p;
  auto clear = [](UniformSite& s) {
    std::fill(s.log_s.begin(), s.log_s.end(), 0.0);
    std::fill(s.zero.begin(), s.zero.end(), 0.0);
  };
  clear(g.in);
  clear(g.mid);
  clear(g.w1);
  clear(g.w2);
  g.hluq.log_s1 = g.hluq.log_s2 = 0.0;
  std::fill(g.d1.begin(), g.d1.end(), 0.0);
  std::fill(g.d2.begin(), g.d2.end(), 0.0);
  return g;
}

struct GradResult {
  Learnables grad;  // same layout as the state; scale entries are d/d(log s)
  double loss = 0.0;
};

/// Gradient of the block loss against `reference` w.r.t. every learnable,
/// with round() passed straight through and clamp() blocking.
inline GradResult ste_grad(const ToyBlock& b, const Tensor& x, const std::vector<double>& reference,
                           const ReconState& st) {
  HardRound r;
  Cache c;
  forward(b, x, st, r, &c);
  const auto& S = st.setup;
  const auto& P = st.p;
  const std::size_t n = c.n, C = b.channels(), H = b.hidden();
  if (reference.size() != n * C) throw ShapeError("reference output has the wrong size");

  GradResult res{zero_like(P), block_loss(reference, c.out)};
  auto& g = res.grad;

  std::vector<double> dout(n * C);
  for (std::size_t i = 0; i < n * C; ++i) dout[i] = 2.0 * (c.out[i] - reference[i]);

  // linear 2
  std::vector<double> dw2(H * C, 0.0), dgq(n * H, 0.0);
  for (std::size_t r0 = 0; r0 < n; ++r0)
    for (std::size_t h = 0; h < H; ++h) {
      const double gv = c.gq[r0 * H + h];
      double acc = 0.0;
      for (std::size_t m = 0; m < C; ++m) {
        const double d = dout[r0 * C + m];
        dw2[h * C + m] += gv * d;
        acc += d * c.w2q[h * C + m];
      }
      dgq[r0 * H + h] = acc;
    }

  // post-GELU site and GELU
  std::vector<double> da(n * H);
  if (S.quant_mid) {
    const HluqConfig hc = P.hluq.config(S.k_a);
    const double mid_s = S.mid == MidScheme::uniform ? std::exp(P.mid.log_s[0]) : 0.0;
    for (std::size_t i = 0; i < n * H; ++i) {
      if (S.mid == MidScheme::hluq) {
        g.hluq.log_s1 += dgq[i] * c.jmid_0[i] * hc.s1;
        g.hluq.log_s2 += dgq[i] * c.jmid_1[i] * hc.s2_step;
      } else {
        g.mid.log_s[0] += dgq[i] * c.jmid_0[i] * mid_s;
        g.mid.zero[0] += dgq[i] * c.jmid_1[i];
      }
    }
  }
  for (std::size_t i = 0; i < n * H; ++i) da[i] = dgq[i] * c.jmid_x[i] * datagen::gelu_grad(c.a[i]);

  // linear 1
  std::vector<double> dw1(C * H, 0.0), dxq(n * C, 0.0);
  for (std::size_t r0 = 0; r0 < n; ++r0)
    for (std::size_t k = 0; k < C; ++k) {
      const double xv = c.xq[r0 * C + k];
      double acc = 0.0;
      for (std::size_t h = 0; h < H; ++h) {
        const double d = da[r0 * H + h];
        dw1[k * H + h] += xv * d;
        acc += d * c.w1q[k * H + h];
      }
      dxq[r0 * C + k] = acc;
    }

  if (S.quant_input) {
    const auto s = P.in.scales();
    for (std::size_t i = 0; i < n * C; ++i) {
      const auto u = static_cast<std::size_t>(P.in.unit_of[i % C]);
      g.in.log_s[u] += dxq[i] * c.jin_s[i] * s[u];
      g.in.zero[u] += dxq[i] * c.jin_z[i];
    }
  }

  auto weight_grads = [&](const std::vector<double>& dw, std::size_t cols, const UniformSite& site,
                          UniformSite& gs, std::vector<double>& gd, const std::vector<double>& jx,
                          const std::vector<double>& js, const std::vector<double>& jz) {
    const auto s = site.scales();
    for (std::size_t i = 0; i < dw.size(); ++i) {
      if (!S.quant_weights) {
        gd[i] = dw[i];
        continue;
      }
      const auto u = static_cast<std::size_t>(site.unit_of[i % cols]);
      gd[i] = dw[i] * jx[i] * s[u];
      gs.log_s[u] += dw[i] * js[i] * s[u];
      gs.zero[u] += dw[i] * jz[i];
    }
  };
  weight_grads(dw1, H, P.w1, g.w1, g.d1, c.jw1_x, c.jw1_s, c.jw1_z);
  weight_grads(dw2, C, P.w2, g.w2, g.d2, c.jw2_x, c.jw2_s, c.jw2_z);
  return res;
}

// ---------------------------------------------------------------------------
// Initialization.

struct InitOptions {
  Setup setup;
  Granularity input_granularity = Granularity::per_channel;
  int weight_groups = 0;  // 0: one unit per output channel
  bool mse_scan = false;  // uniform sites: MinMax (false) or MinMax-seeded MSE scan
  calibration::HluqSearchSpace hluq_space;
  std::uint64_t seed = 0;
};

namespace detail {

inline Tensor hidden_fp(const ToyBlock& b, const Tensor& x) {
  const std::size_t n = x.rows(), C = b.channels(), H = b.hidden();
  std::vector<float> g(n * H);
  const auto xv = x.data();
  const auto w = b.w1.data();
  const auto b1 = b.b1.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t h = 0; h < H; ++h) {
      double acc = 0.0;
      for (std::size_t k = 0; k < C; ++k) acc += static_cast<double>(xv[r * C + k]) * w[k * H + h];
      g[r * H + h] = static_cast<float>(datagen::gelu(acc + b1[h]));
    }
  return Tensor({n, H}, std::move(g), 1);
}

inline Tensor stack(const std::vector<Tensor>& batches) {
  std::vector<float> all;
  for (const auto& t : batches) all.insert(all.end(), t.data().begin(), t.data().end());
  const std::size_t cols = batches.front().cols(), rows = all.size() / cols;
  return Tensor({rows, cols}, std::move(all), 1);
}

inline ParamSet uniform_init(const Tensor& t, int k, Granularity g, bool scan) {
  return scan ? calibration::mse_init(t, k, g) : calibration::minmax_init(t, k, g);
}

inline void init_weight_site(const Tensor& w, int k, int groups, bool scan, std::uint64_t seed,
                             UniformSite& site) {
  const auto per_channel = uniform_init(w, k, Granularity::per_channel, scan);
  std::vector<int> ident(w.cols());
  std::iota(ident.begin(), ident.end(), 0);
  if (groups <= 0 || static_cast<std::size_t>(groups) >= w.cols()) {
    site.set_units(per_channel.params, ident);
    return;
  }
  auto g = cag::apply_grouping(per_channel, groups, seed);
  const auto ps = cag::refine_groups(w, g, k);
  site.set_units(ps.params, g.group_of);
}

}  // namespace detail

/// Calibrated starting point: MinMax (or the MSE scan) for the uniform
/// sites, the (alpha, beta) grid search for HLUQ on the floating-point
/// post-GELU activations, zero perturbations.
inline ReconState init_state(const ToyBlock& b, const std::vector<Tensor>& batches, const InitOptions& opt) {
  b.validate();
  if (batches.empty()) throw ParameterError("reconstruction needs calibration batches");
  check_bits(opt.setup.k_a);
  check_bits(opt.setup.k_w);
  ReconState st;
  st.setup = opt.setup;
  const std::size_t C = b.channels();
  const Tensor x = detail::stack(batches);
  if (x.cols() != C) throw ShapeError("calibration batches do not match the block width");

  if (opt.input_granularity == Granularity::per_tensor) {
    st.p.in.set_units(detail::uniform_init(x, opt.setup.k_a, Granularity::per_tensor, opt.mse_scan).params,
                      std::vector<int>(C, 0));
  } else if (opt.input_granularity == Granularity::per_channel) {
    std::vector<int> ident(C);
    std::iota(ident.begin(), ident.end(), 0);
    st.p.in.set_units(detail::uniform_init(x, opt.setup.k_a, Granularity::per_channel, opt.mse_scan).params, ident);
  } else {
    throw ParameterError("input grouping is produced during reconstruction");
  }

  std::vector<Tensor> hidden;
  for (const auto& t : batches) hidden.push_back(detail::hidden_fp(b, t));
  const Tensor g = detail::stack(hidden);
  st.p.mid.set_units(detail::uniform_init(g, opt.setup.k_a, Granularity::per_tensor, opt.mse_scan).params,
                     std::vector<int>(b.hidden(), 0));
  if (opt.setup.mid == MidScheme::hluq) {
    const auto r = calibration::hluq_search(hidden, b.w2, opt.setup.k_a, opt.hluq_space);
    st.p.hluq = {std::log(r.config.s1), std::log(r.config.s2_step), r.config.offset, r.config.b_hat};
  }

  detail::init_weight_site(b.w1, opt.setup.k_w, opt.weight_groups, opt.mse_scan, opt.seed, st.p.w1);
  detail::init_weight_site(b.w2, opt.setup.k_w, opt.weight_groups, opt.mse_scan, opt.seed + 1, st.p.w2);
  st.p.d1.assign(b.w1.size(), 0.0);
  st.p.d2.assign(b.w2.size(), 0.0);
  return st;
}

// ---------------------------------------------------------------------------
// Optimization.

struct ReconOptions {
  int iters = 2000;
  double lr = 0.01;
  double lr_scale = 1.0;  // multipliers per scalar class
  double lr_zero = 1.0;
  double lr_delta = 1.0;
  std::uint64_t seed = 0;
  cag::MilestoneSchedule schedule;  // input-site regrouping; empty = fixed units
  double divergence_factor = 1e6;
};

struct RegroupEvent {
  int iteration = 0;
  int groups = 0;
  bool reduced = false;
  std::vector<double> distortion;  // k-means, after every assignment step
};

struct ReconResult {
  ReconState state;
  double initial_loss = 0.0;  // mean block loss over the batches before optimization
  double final_loss = 0.0;    // same after optimization
  std::vector<RegroupEvent> regroups;
};

/// Mean over batches of the hard-quantized block loss.
inline double mean_loss(const ToyBlock& b, const std::vector<Tensor>& batches,
                        const std::vector<std::vector<double>>& refs, const ReconState& st) {
  double acc = 0.0;
  for (std::size_t i = 0; i < batches.size(); ++i) acc += block_loss(refs[i], forward_quant(b, batches[i], st));
  return acc / static_cast<double>(batches.size());
}

inline double mean_loss(const ToyBlock& b, const std::vector<Tensor>& batches, const ReconState& st) {
  std::vector<std::vector<double>> refs;
  for (const auto& t : batches) refs.push_back(forward_fp(b, t));
  return mean_loss(b, batches, refs, st);
}

/// Clusters the current per-channel view of the input site into k groups;
/// each group takes its centroid (s, z).
inline cag::GroupAssignment regroup_input(UniformSite& site, int k, std::uint64_t seed, bool* reduced = nullptr,
                                          std::vector<double>* distortion = nullptr) {
  const auto s = site.scales();
  std::vector<cag::Point> pts;
  for (std::size_t c = 0; c < site.channels(); ++c) {
    const auto u = static_cast<std::size_t>(site.unit_of[c]);
    pts.push_back({s[u], site.zero[u]});
  }
  const auto km = cag::kmeans(pts, k, seed);
  if (reduced) *reduced = km.reduced;
  if (distortion) *distortion = km.distortion;
  cag::GroupAssignment g{km.assignment, km.centroids, cag::contiguous_order(km.assignment)};
  site.unit_of = g.group_of;
  site.log_s.clear();
  site.zero.clear();
  for (const auto& c : g.centroids) {
    site.log_s.push_back(std::log(c.s));
    site.zero.push_back(c.z);
  }
  return g;
}

/// Current grouping of the input site.
inline cag::GroupAssignment input_grouping(const UniformSite& site) {
  const auto s = site.scales();
  cag::GroupAssignment g;
  g.group_of = site.unit_of;
  for (std::size_t u = 0; u < site.units(); ++u) g.centroids.push_back({s[u], site.zero[u]});
  g.reorder = cag::contiguous_order(g.group_of);
  return g;
}

inline void project(const Setup& S, Learnables& p) {
  const double qa = max_code(S.k_a), qw = max_code(S.k_w);
  for (auto& z : p.in.zero) z = std::clamp(z, 0.0, qa);
  for (auto& z : p.mid.zero) z = std::clamp(z, 0.0, qa);
  for (auto& z : p.w1.zero) z = std::clamp(z, 0.0, qw);
  for (auto& z : p.w2.zero) z = std::clamp(z, 0.0, qw);
  if (S.quant_weights) {
    for (auto& v : p.d1) v = std::clamp(v, -0.5, 0.5);
    for (auto& v : p.d2) v = std::clamp(v, -0.5, 0.5);
  }
}

/// Gradient descent with cosine-decayed step on the block loss, divided by
/// the initial mean loss so that lr is scale free. Iteration t
/// uses batch t mod B. Regrouping happens at the start of each milestone
/// iteration. Throws DivergenceError if a batch loss is non-finite or grows
/// past divergence_factor times the first one.
inline ReconResult reconstruct(const ToyBlock& b, const std::vector<Tensor>& batches, ReconState st,
                               const ReconOptions& opt,
                               const std::function<void(int, const ReconState&)>& on_milestone = {}) {
  if (batches.empty()) throw ParameterError("reconstruction needs calibration batches");
  if (opt.iters < 0) throw ParameterError("iteration count must be nonnegative");
  opt.schedule.validate();
  if (opt.schedule.total_iters != 0 && opt.schedule.total_iters != opt.iters)
    throw ParameterError("milestone schedule total " + std::to_string(opt.schedule.total_iters) +
                         " differs from iteration count " + std::to_string(opt.iters));
  if (!opt.schedule.milestones.empty() && !st.setup.quant_input)
    throw ParameterError("regrouping needs a quantized input site");

  std::vector<std::vector<double>> refs;
  for (const auto& t : batches) refs.push_back(forward_fp(b, t));

  ReconResult res;
  res.initial_loss = mean_loss(b, batches, refs, st);
  const double norm = res.initial_loss > 0.0 ? 1.0 / res.initial_loss : 1.0;
  double first = 0.0;
  std::size_t next = 0;
  for (int t = 0; t < opt.iters; ++t) {
    while (next < opt.schedule.milestones.size() && opt.schedule.milestones[next].iter == t + 1) {
      const auto& m = opt.schedule.milestones[next];
      RegroupEvent ev{t + 1, m.groups, false, {}};
      regroup_input(st.p.in, m.groups, opt.seed + next, &ev.reduced, &ev.distortion);
      res.regroups.push_back(ev);
      if (on_milestone) on_milestone(t + 1, st);
      ++next;
    }
    const std::size_t bi = static_cast<std::size_t>(t) % batches.size();
    const auto gr = ste_grad(b, batches[bi], refs[bi], st);
    if (t == 0) first = gr.loss;
    if (!std::isfinite(gr.loss) || gr.loss > opt.divergence_factor * std::max(first, 1e-300))
      throw DivergenceError("reconstruction diverged at iteration " + std::to_string(t) + ": loss " +
                            kv::format_double(gr.loss) + " vs initial " + kv::format_double(first));
    st.loss_history.push_back(gr.loss);
    const double lr = norm * opt.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t / opt.iters));
    auto g = gr.grad;
    std::vector<double*> grads;
    for_each_scalar(st.setup, g, [&](double& v, ScalarClass) { grads.push_back(&v); });
    std::size_t i = 0;
    for_each_scalar(st.setup, st.p, [&](double& v, ScalarClass cls) {
      const double mult = cls == ScalarClass::scale ? opt.lr_scale
                          : cls == ScalarClass::zero ? opt.lr_zero
                                                      : opt.lr_delta;
      v -= lr * mult * *grads[i++];
    });
    project(st.setup, st.p);
    ++st.iteration;
  }
  res.final_loss = mean_loss(b, batches, refs, st);
  res.state = std::move(st);
  return res;
}

// ---------------------------------------------------------------------------
// Export.

inline std::string loss_csv(const std::vector<double>& history) {
  std::string out = "iteration,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) out += std::to_string(i) + "," + kv::format_double(history[i]) + "\n";
  return out;
}

/// Effective parameter set of one uniform site at bit-width k.
inline ParamSet site_params(const UniformSite& site, int k) {
  const auto s = site.scales();
  std::vector<QuantParams> ps;
  for (std::size_t u = 0; u < site.units(); ++u) {
    const int z = static_cast<int>(std::clamp(std::round(site.zero[u]), 0.0, static_cast<double>(max_code(k))));
    ps.push_back(QuantParams::uniform(s[u], z, k));
  }
  if (site.units() == 1) return ParamSet::per_tensor(ps.front());
  bool ident = site.units() == site.channels();
  for (std::size_t c = 0; ident && c < site.channels(); ++c) ident = site.unit_of[c] == static_cast<int>(c);
  return ident ? ParamSet::per_channel(std::move(ps)) : ParamSet::per_group(std::move(ps), site.unit_of);
}

}  // namespace ahcq::recon
