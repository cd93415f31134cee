#include <gtest/gtest.h>

#include <cmath>

#include "ahcq/datagen.hpp"
#include "ahcq/quantize_tensor.hpp"
#include "ahcq/quantizers.hpp"
#include "ahcq/rng.hpp"
#include "quant_props.hpp"

using ahcq::HluqConfig;
using ahcq::QuantParams;

TEST(Uniform, GridExamples) {
  auto p = QuantParams::uniform(0.5, 0, 4);
  EXPECT_EQ(ahcq::uniform_quant(3.2, p), 6);
  EXPECT_EQ(ahcq::uniform_dequant(6, p), 3.0);
  EXPECT_EQ(ahcq::uniform_quant(10.0, p), 15);
  EXPECT_EQ(ahcq::uniform_dequant(15, p), 7.5);
  EXPECT_EQ(ahcq::uniform_quant(0.0, QuantParams::uniform(0.37, 0, 4)), 0);
  EXPECT_EQ(ahcq::uniform_dequant(0, QuantParams::uniform(0.37, 0, 4)), 0.0);
}

TEST(Uniform, TiesRoundAwayFromZero) {
  auto p = QuantParams::uniform(1.0, 8, 4);
  EXPECT_EQ(ahcq::uniform_quant(2.5, p), 11);
  EXPECT_EQ(ahcq::uniform_quant(-2.5, p), 5);
}

TEST(Log2, GridExamples) {
  auto p = QuantParams::log2(0.8, 4);
  EXPECT_EQ(ahcq::log2_quant(0.8, p), 0);
  EXPECT_EQ(ahcq::log2_dequant(0, p), 0.8);
  EXPECT_EQ(ahcq::log2_quant(0.1, p), 3);
  EXPECT_EQ(ahcq::log2_dequant(3, p), 0.1);
  EXPECT_EQ(ahcq::log2_quant(0.0, p), 15);
  EXPECT_EQ(ahcq::log2_quant(-1.0, p), 15);
  EXPECT_EQ(ahcq::log2_dequant(15, p), 0.8 * std::exp2(-15));
}

TEST(Log2, RejectsNonpositiveScale) {
  QuantParams p = QuantParams::log2(1.0, 4);
  p.s = 0.0;
  EXPECT_THROW(ahcq::log2_quant(0.5, p), ahcq::ParameterError);
  EXPECT_THROW(QuantParams::log2(-1.0, 4), ahcq::ParameterError);
}

namespace {

std::vector<double> gelu_values(std::size_t n, std::uint64_t seed) {
  ahcq::datagen::FixtureSpec spec;
  spec.kind = ahcq::datagen::FixtureKind::post_gelu;
  spec.dims = {n, 1};
  spec.seed = seed;
  auto t = ahcq::datagen::gen(spec);
  return {t.data().begin(), t.data().end()};
}

}  // namespace

TEST(Log2, NonpositiveToTopCodeMinimizesError) {
  // Nonpositive GELU outputs map to one fixed code; the top code is the best choice.
  const auto xs = gelu_values(20000, 3);
  const double s = *std::max_element(xs.begin(), xs.end());
  auto p = QuantParams::log2(s, 4);
  auto mse_with = [&](int fixed) {
    double acc = 0.0;
    for (double x : xs) {
      const double v = x > 0.0 ? ahcq::fake_quant(x, p) : ahcq::log2_dequant(fixed, p);
      acc += (x - v) * (x - v);
    }
    return acc;
  };
  const double chosen = mse_with(15);
  for (int c = 0; c < 15; ++c) EXPECT_GE(mse_with(c), chosen) << c;
}

TEST(Log2Biased, Examples) {
  auto p = QuantParams::log2_biased(1.0, -0.2, 4);
  EXPECT_EQ(ahcq::log2_biased_quant(-0.2, p), 15);
  EXPECT_EQ(ahcq::log2_biased_dequant(15, p), -0.2 + std::exp2(-15));
  auto unbiased = QuantParams::log2_biased(0.8, 0.0, 4);
  auto plain = QuantParams::log2(0.8, 4);
  ahcq::rng::Stream r(1, 0);
  for (int i = 0; i < 1000; ++i) {
    const double x = r.uniform(-0.5, 1.0);
    EXPECT_EQ(ahcq::log2_biased_quant(x, unbiased), ahcq::log2_quant(x, plain));
    EXPECT_EQ(ahcq::log2_biased_dequant(ahcq::log2_biased_quant(x, unbiased), unbiased),
              ahcq::log2_dequant(ahcq::log2_quant(x, plain), plain));
  }
}

TEST(Log2Biased, BeatsClippedLog2OnGelu) {
  const auto xs = gelu_values(20000, 4);
  const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
  auto biased = QuantParams::log2_biased(*mx - *mn, *mn, 4);
  auto plain = QuantParams::log2(*mx, 4);
  double e_biased = 0.0, e_plain = 0.0;
  for (double x : xs) {
    e_biased += std::pow(x - ahcq::fake_quant(x, biased), 2);
    // negatives clipped to the smallest positive grid value
    const double v = x > 0.0 ? ahcq::fake_quant(x, plain) : ahcq::log2_dequant(15, plain);
    e_plain += std::pow(x - v, 2);
  }
  EXPECT_LT(e_biased, e_plain);
}

TEST(Hluq, GridHitInLogBlock) {
  HluqConfig c{0.1, 0.1, 8, 4, 0.0};
  EXPECT_EQ(ahcq::hluq_quant(0.05, c), 1);
  EXPECT_EQ(ahcq::hluq_dequant(1, c), 0.05);
  EXPECT_EQ(ahcq::hluq_quant(0.1, c), 0);
}

TEST(Hluq, UniformBlockLayout) {
  HluqConfig c{0.1, 0.1, 8, 4, 0.0};
  // codes 8..15 are s1 + s2_step * (1..8); the top code reaches the range end
  EXPECT_DOUBLE_EQ(ahcq::hluq_dequant(8, c), 0.2);
  EXPECT_DOUBLE_EQ(ahcq::hluq_dequant(15, c), 0.9);
  EXPECT_DOUBLE_EQ(c.range(), 0.9);
  EXPECT_EQ(ahcq::hluq_quant(0.9, c), 15);
  EXPECT_EQ(ahcq::hluq_quant(5.0, c), 15);
  EXPECT_DOUBLE_EQ(ahcq::hluq_dequant(ahcq::hluq_quant(0.31, c), c), 0.3);
  EXPECT_EQ(ahcq::hluq_quant(0.31, c), 9);
}

TEST(Hluq, UniformTieRoundsAwayFromZero) {
  // dyadic config so (y - s1) / s2_step is an exact tie
  HluqConfig c{0.25, 0.5, 8, 4, 0.0};
  EXPECT_EQ(ahcq::hluq_quant(0.25 + 1.75, c), 8 - 1 + 4);
  EXPECT_EQ(ahcq::hluq_dequant(11, c), 2.25);
  // a tie between s1 and the first uniform level stays above s1
  EXPECT_EQ(ahcq::hluq_quant(0.5, c), 8);
}

TEST(Hluq, OffsetShiftsInput) {
  HluqConfig c{0.1, 0.1, 8, 4, -0.17};
  EXPECT_EQ(ahcq::hluq_quant(0.05 - 0.17, c), 1);
  EXPECT_DOUBLE_EQ(ahcq::hluq_dequant(1, c), 0.05 - 0.17);
  EXPECT_EQ(ahcq::hluq_quant(-0.17, c), 7);
  EXPECT_EQ(ahcq::hluq_quant(-5.0, c), 7);
}

TEST(Hluq, FromAlphaBeta) {
  auto c = HluqConfig::from_alpha_beta(0.3, 0.5, 2.0, 4, -0.1);
  EXPECT_EQ(c.b_hat, 8);
  EXPECT_DOUBLE_EQ(c.s1, 0.6);
  EXPECT_DOUBLE_EQ(c.s2_step, 1.4 / 8);
  EXPECT_NEAR(c.range(), 2.0, 2.0 * 1e-12);
  EXPECT_THROW(HluqConfig::from_alpha_beta(0.3, 0.3, 2.0, 4, 0.0), ahcq::ParameterError);
  EXPECT_THROW(HluqConfig::from_alpha_beta(0.0, 0.5, 2.0, 4, 0.0), ahcq::ParameterError);
  EXPECT_THROW(HluqConfig::from_alpha_beta(0.5, 0.125, 2.0, 2, 0.0), ahcq::ParameterError);
}

TEST(Hluq, InvalidConfigRejected) {
  EXPECT_THROW(QuantParams::from_hluq(HluqConfig{0.1, 0.1, 0, 4, 0.0}), ahcq::ParameterError);
  EXPECT_THROW(QuantParams::from_hluq(HluqConfig{0.1, 0.1, 16, 4, 0.0}), ahcq::ParameterError);
  EXPECT_THROW(QuantParams::from_hluq(HluqConfig{-0.1, 0.1, 8, 4, 0.0}), ahcq::ParameterError);
  EXPECT_THROW(QuantParams::from_hluq(HluqConfig{0.1, 0.1, 8, 9, 0.0}), ahcq::ParameterError);
}

TEST(Hluq, DequantStaysNearRange) {
  ahcq::rng::Stream r(8, 0);
  for (int i = 0; i < 200; ++i) {
    const int k = 2 + static_cast<int>(r.below(7));
    const double beta = std::exp2(-1.0 - static_cast<double>(r.below(k == 2 ? 2 : 3)));
    auto c = HluqConfig::from_alpha_beta(r.uniform(0.05, 0.95), beta, r.uniform(0.1, 10), k, r.uniform(-1, 1));
    for (int code = 0; code <= ahcq::max_code(k); ++code) {
      const double v = ahcq::hluq_dequant(code, c);
      EXPECT_GE(v, c.offset - c.s2_step);
      EXPECT_LE(v, c.offset + c.range() * (1 + 1e-12) + c.s2_step);
    }
  }
}

TEST(Hluq, DegeneratesToUniformForTinyLogBlock) {
  for (int k = 2; k <= 8; ++k) {
    auto c = HluqConfig::from_alpha_beta(1e-8, 0.5, 3.0, k, 0.0);
    auto u = QuantParams::uniform(c.s2_step, 0, k);
    for (int code = c.b_hat; code <= ahcq::max_code(k); ++code)
      EXPECT_NEAR(ahcq::hluq_dequant(code, c), ahcq::uniform_dequant(code - c.b_hat + 1, u), 1e-6);
    ahcq::rng::Stream r(k, 0);
    for (int i = 0; i < 2000; ++i) {
      const double x = r.uniform(c.s1, c.range());
      const double frac = x / c.s2_step - std::floor(x / c.s2_step);
      if (std::abs(frac - 0.5) < 1e-6) continue;
      EXPECT_NEAR(ahcq::fake_quant(x, QuantParams::from_hluq(c)), ahcq::fake_quant(x, u), 1e-6);
    }
  }
}

TEST(Hluq, DegeneratesToLog2WhenLogBlockFillsCodes) {
  for (int k = 4; k <= 8; ++k) {
    HluqConfig c{0.01, 0.5, ahcq::max_code(k), k, 0.0};
    auto l = QuantParams::log2(c.s1, k);
    for (int code = 0; code < c.b_hat; ++code) EXPECT_EQ(ahcq::hluq_dequant(code, c), ahcq::log2_dequant(code, l));
    ahcq::rng::Stream r(k, 1);
    for (int i = 0; i < 2000; ++i) {
      const double x = c.s1 * std::exp2(-r.uniform(0.0, ahcq::max_code(k) + 2.0));
      EXPECT_NEAR(ahcq::fake_quant(x, QuantParams::from_hluq(c)), ahcq::fake_quant(x, l), 1e-6);
    }
  }
}

TEST(QuantizeTensor, ConstantTensorDegenerateRange) {
  auto t = ahcq::Tensor::filled({3, 2}, 0.0f, 1);
  auto ps = ahcq::ParamSet::per_tensor(QuantParams::uniform(1.0, 0, 4));
  auto codes = ahcq::quantize_tensor(t, ps);
  EXPECT_TRUE(std::ranges::all_of(codes.codes, [&](int c) { return c == codes.codes[0]; }));
  EXPECT_EQ(ahcq::dequantize_tensor(codes, ps), t);
}

TEST(QuantizeTensor, PerChannelMatchesElementOracle) {
  ahcq::rng::Stream r(2, 0);
  std::vector<float> v(2 * 50);
  for (std::size_t i = 0; i < 50; ++i) {
    v[2 * i] = static_cast<float>(r.uniform(0.0, 7.5));
    v[2 * i + 1] = static_cast<float>(r.uniform(0.0, 75.0));
  }
  ahcq::Tensor t({50, 2}, v, 1);
  auto ps = ahcq::ParamSet::per_channel({QuantParams::uniform(0.5, 0, 4), QuantParams::uniform(5.0, 0, 4)});
  auto codes = ahcq::quantize_tensor(t, ps);
  auto back = ahcq::dequantize_tensor(codes, ps);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& p = ps.params[i % 2];
    EXPECT_EQ(codes.codes[i], ahcq::uniform_quant(t[i], p));
    EXPECT_LE(std::abs(back[i] - t[i]), p.s / 2 + 1e-6);
  }
}

TEST(QuantizeTensor, GroupsOfOneEqualPerChannel) {
  ahcq::rng::Stream r(3, 0);
  std::vector<float> v(40 * 4);
  for (auto& x : v) x = static_cast<float>(r.uniform(-3, 3));
  ahcq::Tensor t({40, 4}, v, 1);
  std::vector<QuantParams> ps;
  for (int c = 0; c < 4; ++c) ps.push_back(QuantParams::uniform(0.1 * (c + 1), 7 + c, 4));
  auto pc = ahcq::ParamSet::per_channel(ps);
  auto pg = ahcq::ParamSet::per_group(ps, {0, 1, 2, 3});
  EXPECT_EQ(ahcq::quantize_tensor(t, pc), ahcq::quantize_tensor(t, pg));
}

TEST(QuantizeTensor, CountMismatchIsShapeError) {
  auto t = ahcq::Tensor::zeros({3, 4}, 1);
  auto ps = ahcq::ParamSet::per_channel({QuantParams::uniform(1.0, 0, 4)});
  EXPECT_THROW(ahcq::quantize_tensor(t, ps), ahcq::ShapeError);
  EXPECT_THROW(ahcq::quantize_tensor(t, ahcq::ParamSet::per_group({QuantParams::uniform(1.0, 0, 4)}, {0, 0, 1, 0})),
               ahcq::ShapeError);
}

TEST(Properties, RoundTripMonotoneClampOnRandomParams) {
  ahcq::rng::Stream r(2024, 0);
  for (auto scheme : {ahcq::Scheme::uniform, ahcq::Scheme::log2, ahcq::Scheme::log2_biased, ahcq::Scheme::hluq})
    for (int k = 2; k <= 8; ++k) {
      ahcq::testing::PropertyStats st;
      for (int i = 0; i < 50; ++i) ahcq::testing::check_properties(ahcq::testing::random_params(r, scheme, k), r, st);
      EXPECT_EQ(st.failure, "");
    }
}
