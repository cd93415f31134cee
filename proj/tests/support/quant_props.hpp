#pragma once

// Randomized property checks for the element quantizers: code round trip,
// monotone fake-quant, clamping outside the grid.

#include <algorithm>
#include <string>
#include <vector>

#include "ahcq/quantizers.hpp"
#include "ahcq/rng.hpp"

namespace ahcq::testing {

inline QuantParams random_params(rng::Stream& r, Scheme scheme, int k) {
  const double s = std::exp(r.uniform(std::log(1e-3), std::log(1e2)));
  switch (scheme) {
    case Scheme::uniform: return QuantParams::uniform(s, static_cast<int>(r.below(std::uint64_t{1} << k)), k);
    case Scheme::log2: return QuantParams::log2(s, k);
    case Scheme::log2_biased: return QuantParams::log2_biased(s, r.uniform(-1.0, 1.0), k);
    case Scheme::hluq: {
      // beta on the power-of-two ladder with b_hat >= 1
      const int shift = 1 + static_cast<int>(r.below(static_cast<std::uint64_t>(k)));
      const double beta = std::exp2(-shift);
      return QuantParams::from_hluq(HluqConfig::from_alpha_beta(r.uniform(0.02, 0.98), beta, s, k, r.uniform(-1.0, 1.0)));
    }
  }
  throw ParameterError("unknown scheme");
}

struct PropertyStats {
  long codes = 0;
  long collapsed = 0;  // codes sharing their dequantized double with another code
  std::string failure;
};

/// Records the first violated property in st.failure.
inline void check_properties(const QuantParams& p, rng::Stream& r, PropertyStats& st, int samples = 64) {
  const auto g = grid(p);
  const int top = max_code(p.k);
  auto fail = [&](const std::string& what) {
    if (st.failure.empty())
      st.failure = std::string(to_string(p.scheme)) + " k=" + std::to_string(p.k) + ": " + what;
  };
  for (int c = 0; c <= top; ++c) {
    ++st.codes;
    const double v = g[static_cast<std::size_t>(c)];
    const bool unique = std::count(g.begin(), g.end(), v) == 1;
    const int back = quantize(v, p);
    if (unique) {
      if (back != c) fail("code " + std::to_string(c) + " -> " + std::to_string(back));
    } else {
      ++st.collapsed;
      if (dequantize(back, p) != v) fail("collapsed code " + std::to_string(c) + " changes value");
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(g.begin(), g.end());
  const double lo = *lo_it, hi = *hi_it, span = std::max(hi - lo, 1e-12);
  std::vector<double> xs{lo - span, lo - 1e-3 * span, hi + 1e-3 * span, hi + span};
  for (int i = 0; i < samples; ++i) xs.push_back(r.uniform(lo - 0.25 * span, hi + 0.25 * span));
  for (double v : g) xs.push_back(v);
  std::sort(xs.begin(), xs.end());
  double prev = -1e300;
  for (double x : xs) {
    const double y = fake_quant(x, p);
    if (y < prev) fail("fake_quant decreases at x=" + std::to_string(x));
    prev = y;
    if (x < lo && y != lo) fail("x below grid not clamped to its minimum");
    if (x > hi && y != hi) fail("x above grid not clamped to its maximum");
  }
}

}  // namespace ahcq::testing
