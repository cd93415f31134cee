#pragma once

// Deterministic synthetic fixtures. All randomness comes from
// ahcq::rng::Stream, with a fixed stream id per role:
//   1 values, 2 channel scales, 3 channel means,
//   11 W1, 12 b1, 13 W2, 14 b2, 100 + b calibration batch b.

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ahcq/error.hpp"
#include "ahcq/kv.hpp"
#include "ahcq/rng.hpp"
#include "ahcq/tensor.hpp"

namespace ahcq::datagen {

enum class FixtureKind { post_gelu, channel_varied, gaussian, toy_block };

inline std::string_view to_string(FixtureKind k) {
  switch (k) {
    case FixtureKind::post_gelu: return "post_gelu";
    case FixtureKind::channel_varied: return "channel_varied";
    case FixtureKind::gaussian: return "gaussian";
    case FixtureKind::toy_block: return "toy_block";
  }
  return "?";
}

inline FixtureKind parse_kind(std::string_view s) {
  if (s == "post_gelu") return FixtureKind::post_gelu;
  if (s == "channel_varied") return FixtureKind::channel_varied;
  if (s == "gaussian") return FixtureKind::gaussian;
  if (s == "toy_block") return FixtureKind::toy_block;
  throw ParameterError("unknown fixture kind '" + std::string(s) + "'");
}

struct FixtureSpec {
  FixtureKind kind = FixtureKind::gaussian;
  /// [rows, channels] for tensor kinds; [tokens, channels, hidden] for toy_block.
  std::vector<std::size_t> dims;
  std::uint64_t seed = 0;

  // gaussian
  double mean = 0.0;
  double stddev = 1.0;
  // channel_varied (and toy_block inputs): per-channel std log-uniform in
  // [scale_lo, scale_hi], per-channel mean = std * U(-mean_shift, mean_shift)
  double scale_lo = 0.1;
  double scale_hi = 50.0;
  double mean_shift = 0.0;
  // toy_block
  std::size_t batches = 32;
  double hidden_bias = 0.0;  // mean of b1
  double input_gain = 1.0;   // W1 rows scaled by 1 / std_c^input_gain, then to unit pre-activation variance

  void validate() const {
    if (kind == FixtureKind::toy_block) {
      if (dims.size() != 3) throw ParameterError("toy_block dims are [tokens, channels, hidden]");
      if (batches == 0) throw ParameterError("toy_block needs at least one batch");
    } else if (dims.size() != 2) {
      throw ParameterError("fixture dims are [rows, channels]");
    }
    for (auto d : dims)
      if (d == 0) throw ParameterError("fixture dims must be positive");
    if (!(scale_lo > 0.0) || scale_hi < scale_lo) throw ParameterError("bad channel scale range");
    if (!(stddev > 0.0)) throw ParameterError("stddev must be positive");
  }
};

/// Exact GELU, x * Phi(x) with Phi from erf.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

/// d gelu / dx = Phi(x) + x * phi(x).
inline double gelu_grad(double x) {
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

namespace detail {

struct ChannelLaw {
  std::vector<double> stddev;
  std::vector<double> mean;
};

inline ChannelLaw channel_law(const FixtureSpec& spec, std::size_t channels) {
  rng::Stream scales(spec.seed, 2), means(spec.seed, 3);
  ChannelLaw law{std::vector<double>(channels), std::vector<double>(channels)};
  const double lo = std::log(spec.scale_lo), hi = std::log(spec.scale_hi);
  for (std::size_t c = 0; c < channels; ++c) {
    law.stddev[c] = std::exp(scales.uniform(lo, hi));
    law.mean[c] = law.stddev[c] * spec.mean_shift * means.uniform(-1.0, 1.0);
  }
  return law;
}

inline Tensor channel_varied(const ChannelLaw& law, std::size_t rows, std::uint64_t seed,
                             std::uint64_t stream) {
  const std::size_t channels = law.stddev.size();
  rng::Stream values(seed, stream);
  std::vector<float> data(rows * channels);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < channels; ++c)
      data[r * channels + c] = static_cast<float>(law.mean[c] + law.stddev[c] * values.normal());
  return Tensor({rows, channels}, std::move(data), 1);
}

}  // namespace detail

struct ToyBlockFixture {
  Tensor w1;  // [C, H]
  Tensor b1;  // [H]
  Tensor w2;  // [H, C]
  Tensor b2;  // [C]
  std::vector<Tensor> batches;  // each [tokens, C]
};

inline ToyBlockFixture gen_toy_block(const FixtureSpec& spec) {
  spec.validate();
  if (spec.kind != FixtureKind::toy_block) throw ParameterError("gen_toy_block needs kind toy_block");
  const std::size_t tokens = spec.dims[0], c = spec.dims[1], h = spec.dims[2];
  const auto law = detail::channel_law(spec, c);
  ToyBlockFixture f;
  {
    rng::Stream s(spec.seed, 11);
    std::vector<float> w(c * h);
    // unit expected pre-activation variance
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += std::pow(law.stddev[i], 2.0 - 2.0 * spec.input_gain);
    const double norm = 1.0 / std::sqrt(var / static_cast<double>(c));
    for (std::size_t i = 0; i < c; ++i) {
      const double gain = norm / (std::sqrt(static_cast<double>(c)) * std::pow(law.stddev[i], spec.input_gain));
      for (std::size_t j = 0; j < h; ++j) w[i * h + j] = static_cast<float>(gain * s.normal());
    }
    f.w1 = Tensor({c, h}, std::move(w), 1);
  }
  {
    rng::Stream s(spec.seed, 12);
    std::vector<float> b(h);
    for (auto& v : b) v = static_cast<float>(spec.hidden_bias + 0.1 * s.normal());
    f.b1 = Tensor({h}, std::move(b), 0);
  }
  {
    rng::Stream s(spec.seed, 13);
    std::vector<float> w(h * c);
    const double gain = 1.0 / std::sqrt(static_cast<double>(h));
    for (auto& v : w) v = static_cast<float>(gain * s.normal());
    f.w2 = Tensor({h, c}, std::move(w), 1);
  }
  {
    rng::Stream s(spec.seed, 14);
    std::vector<float> b(c);
    for (auto& v : b) v = static_cast<float>(0.01 * s.normal());
    f.b2 = Tensor({c}, std::move(b), 0);
  }
  for (std::size_t b = 0; b < spec.batches; ++b)
    f.batches.push_back(detail::channel_varied(law, tokens, spec.seed, 100 + b));
  return f;
}

/// Generates the fixture tensor. For toy_block this is the stacked
/// calibration input [batches * tokens, C]; use gen_toy_block for the weights.
inline Tensor gen(const FixtureSpec& spec) {
  spec.validate();
  const std::size_t rows = spec.dims[0], cols = spec.dims[1];
  switch (spec.kind) {
    case FixtureKind::post_gelu: {
      rng::Stream values(spec.seed, 1);
      std::vector<float> data(rows * cols);
      for (auto& v : data) v = static_cast<float>(gelu(values.normal()));
      return Tensor({rows, cols}, std::move(data), 1);
    }
    case FixtureKind::gaussian: {
      rng::Stream values(spec.seed, 1);
      std::vector<float> data(rows * cols);
      for (auto& v : data) v = static_cast<float>(spec.mean + spec.stddev * values.normal());
      return Tensor({rows, cols}, std::move(data), 1);
    }
    case FixtureKind::channel_varied:
      return detail::channel_varied(detail::channel_law(spec, cols), rows, spec.seed, 1);
    case FixtureKind::toy_block: {
      const auto f = gen_toy_block(spec);
      std::vector<float> data;
      for (const auto& b : f.batches) data.insert(data.end(), b.data().begin(), b.data().end());
      return Tensor({spec.batches * spec.dims[0], spec.dims[1]}, std::move(data), 1);
    }
  }
  throw ParameterError("unknown fixture kind");
}

/// File stem encoding kind, dims and seed, e.g. "post_gelu_100000x1_s42".
inline std::string file_stem(const FixtureSpec& spec) {
  std::string s(to_string(spec.kind));
  s += '_';
  for (std::size_t i = 0; i < spec.dims.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(spec.dims[i]);
  }
  s += "_s" + std::to_string(spec.seed);
  return s;
}

/// Sidecar text header describing the generating spec.
inline kv::Document header(const FixtureSpec& spec) {
  kv::Document doc;
  auto& sec = doc.add("fixture");
  std::string dims;
  for (std::size_t i = 0; i < spec.dims.size(); ++i) {
    if (i) dims += ' ';
    dims += std::to_string(spec.dims[i]);
  }
  sec.set("kind", std::string(to_string(spec.kind)))
      .set("dims", dims)
      .set("seed", std::to_string(spec.seed))
      .set("mean", spec.mean)
      .set("stddev", spec.stddev)
      .set("scale_lo", spec.scale_lo)
      .set("scale_hi", spec.scale_hi)
      .set("mean_shift", spec.mean_shift)
      .set("batches", spec.batches)
      .set("hidden_bias", spec.hidden_bias)
      .set("input_gain", spec.input_gain)
      .set("prng", "splitmix64-counter");
  return doc;
}

}  // namespace ahcq::datagen
