#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "ahcq/container.hpp"
#include "ahcq/datagen.hpp"

namespace dg = ahcq::datagen;

namespace {

dg::FixtureSpec post_gelu(std::size_t n, std::uint64_t seed) {
  dg::FixtureSpec s;
  s.kind = dg::FixtureKind::post_gelu;
  s.dims = {n, 1};
  s.seed = seed;
  return s;
}

}  // namespace

TEST(Gelu, ReferenceValues) {
  EXPECT_NEAR(dg::gelu(1.0), 0.8413447460685429, 1e-12);
  EXPECT_NEAR(dg::gelu(-1.0), -0.15865525393145707, 1e-12);
  EXPECT_EQ(dg::gelu(0.0), 0.0);
  for (double x : {-3.0, -0.75, 0.2, 2.0}) {
    const double h = 1e-6;
    EXPECT_NEAR(dg::gelu_grad(x), (dg::gelu(x + h) - dg::gelu(x - h)) / (2 * h), 1e-8);
  }
}

TEST(Datagen, SameSpecSameBytes) {
  for (auto kind : {dg::FixtureKind::post_gelu, dg::FixtureKind::channel_varied, dg::FixtureKind::gaussian}) {
    dg::FixtureSpec s;
    s.kind = kind;
    s.dims = {64, 8};
    s.seed = 11;
    EXPECT_EQ(ahcq::container::write(dg::gen(s)), ahcq::container::write(dg::gen(s)));
    auto other = s;
    other.seed = 12;
    EXPECT_NE(dg::gen(s), dg::gen(other));
  }
}

TEST(Datagen, PostGeluShape) {
  auto t = dg::gen(post_gelu(100000, 42));
  const auto v = t.data();
  const double mn = *std::min_element(v.begin(), v.end());
  EXPECT_GT(mn, -0.18);
  EXPECT_GE(mn, -0.1700 - 1e-6);
  // P(GELU(Z) in [-0.2, 0]) = P(Z <= 0) = 1/2; the sample stays within 4 binomial sigma
  const double frac = static_cast<double>(std::count_if(v.begin(), v.end(), [](float x) {
                        return x >= -0.2f && x <= 0.0f;
                      })) / v.size();
  EXPECT_NEAR(frac, 0.5, 4 * 0.5 / std::sqrt(100000.0));
}

TEST(Datagen, ChannelVariedFixedScaleIsHomogeneous) {
  dg::FixtureSpec s;
  s.kind = dg::FixtureKind::channel_varied;
  s.dims = {20000, 4};
  s.seed = 5;
  s.scale_lo = s.scale_hi = 2.0;
  auto t = dg::gen(s);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0, m2 = 0;
    for (std::size_t r = 0; r < 20000; ++r) {
      m += t.at(r, c);
      m2 += static_cast<double>(t.at(r, c)) * t.at(r, c);
    }
    m /= 20000;
    EXPECT_NEAR(m, 0.0, 0.06);
    EXPECT_NEAR(std::sqrt(m2 / 20000 - m * m), 2.0, 0.06);
  }
}

TEST(Datagen, ChannelVariedSpansScaleRange) {
  dg::FixtureSpec s;
  s.kind = dg::FixtureKind::channel_varied;
  s.dims = {512, 256};
  s.seed = 1;
  auto stats = ahcq::channel_stats(dg::gen(s));
  double lo = 1e9, hi = 0;
  for (std::size_t c = 0; c < 256; ++c) {
    const double w = stats.max[c] - stats.min[c];
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  EXPECT_GT(hi / lo, 100.0);
}

TEST(Datagen, ToyBlockShapes) {
  dg::FixtureSpec s;
  s.kind = dg::FixtureKind::toy_block;
  s.dims = {16, 8, 12};
  s.batches = 3;
  s.seed = 9;
  auto f = dg::gen_toy_block(s);
  EXPECT_EQ(f.w1.dims(), (std::vector<std::size_t>{8, 12}));
  EXPECT_EQ(f.w2.dims(), (std::vector<std::size_t>{12, 8}));
  EXPECT_EQ(f.b1.size(), 12u);
  EXPECT_EQ(f.b2.size(), 8u);
  ASSERT_EQ(f.batches.size(), 3u);
  EXPECT_EQ(dg::gen(s).dims(), (std::vector<std::size_t>{48, 8}));
  EXPECT_NE(f.batches[0], f.batches[1]);
}

TEST(Datagen, InvalidSpec) {
  dg::FixtureSpec s;
  s.dims = {4};
  EXPECT_THROW(dg::gen(s), ahcq::ParameterError);
  s.dims = {4, 0};
  EXPECT_THROW(dg::gen(s), ahcq::ParameterError);
  EXPECT_THROW(dg::parse_kind("lognormal"), ahcq::ParameterError);
}

TEST(Datagen, StemAndHeader) {
  auto s = post_gelu(100000, 42);
  EXPECT_EQ(dg::file_stem(s), "post_gelu_100000x1_s42");
  auto h = dg::header(s).str();
  EXPECT_NE(h.find("kind = post_gelu"), std::string::npos);
  EXPECT_NE(h.find("seed = 42"), std::string::npos);
}
