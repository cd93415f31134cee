#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "ahcq/container.hpp"
#include "ahcq/rng.hpp"
#include "ahcq/tensor.hpp"

using ahcq::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> dims, std::size_t axis, std::uint64_t seed) {
  ahcq::rng::Stream r(seed, 0);
  std::vector<float> v(Tensor::product(dims));
  for (auto& x : v) x = static_cast<float>(r.uniform(-10.0, 10.0));
  return Tensor(std::move(dims), std::move(v), axis);
}

}  // namespace

TEST(Tensor, RejectsBadConstruction) {
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}, 0), ahcq::ShapeError);
  EXPECT_THROW(Tensor({2, 0}, {}, 0), ahcq::ShapeError);
  EXPECT_THROW(Tensor({2}, {1, 2}, 1), ahcq::ShapeError);
  EXPECT_THROW(Tensor({1}, {std::numeric_limits<float>::quiet_NaN()}, 0), ahcq::DomainError);
  EXPECT_THROW(Tensor({1}, {std::numeric_limits<float>::infinity()}, 0), ahcq::DomainError);
}

TEST(Tensor, MatmulIdentity) {
  auto i2 = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_EQ(ahcq::matmul(i2, i2).data()[0], 1.0f);
  EXPECT_TRUE(std::ranges::equal(ahcq::matmul(i2, i2).data(), i2.data()));
}

TEST(Tensor, MatmulHandArithmetic) {
  auto y = ahcq::matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{1}, {1}}));
  ASSERT_EQ(y.dims(), (std::vector<std::size_t>{2, 1}));
  EXPECT_EQ(y.at(0, 0), 3.0f);
  EXPECT_EQ(y.at(1, 0), 7.0f);
}

TEST(Tensor, MatmulZeros) {
  auto y = ahcq::matmul(Tensor::zeros({3, 4}, 1), random_tensor({4, 2}, 1, 3));
  EXPECT_TRUE(std::ranges::all_of(y.data(), [](float v) { return v == 0.0f; }));
}

TEST(Tensor, MatmulShapeMismatch) {
  EXPECT_THROW(ahcq::matmul(Tensor::zeros({3, 4}, 1), Tensor::zeros({3, 2}, 1)), ahcq::ShapeError);
}

TEST(Tensor, MatmulDeterministicAndAscendingOrder) {
  auto a = random_tensor({7, 13}, 1, 1), b = random_tensor({13, 5}, 1, 2);
  auto y1 = ahcq::matmul(a, b), y2 = ahcq::matmul(a, b);
  EXPECT_EQ(y1, y2);
  for (std::size_t n = 0; n < 7; ++n)
    for (std::size_t m = 0; m < 5; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 13; ++k) acc += static_cast<double>(a.at(n, k)) * b.at(k, m);
      EXPECT_EQ(y1.at(n, m), static_cast<float>(acc));
    }
}

TEST(ChannelStats, HandExample) {
  auto s = ahcq::channel_stats(Tensor::matrix({{-1, 2}, {3, 0}}));
  EXPECT_EQ(s.min[0], -1.0f);
  EXPECT_EQ(s.max[0], 3.0f);
  EXPECT_EQ(s.mean[0], 1.0f);
  EXPECT_EQ(s.min[1], 0.0f);
  EXPECT_EQ(s.max[1], 2.0f);
  EXPECT_EQ(s.mean[1], 1.0f);
}

TEST(ChannelStats, ConstantAndSingle) {
  auto s = ahcq::channel_stats(Tensor::filled({4, 3}, 2.5f, 1));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(s.min[c], 2.5f);
    EXPECT_EQ(s.max[c], 2.5f);
    EXPECT_EQ(s.mean[c], 2.5f);
  }
  auto one = ahcq::channel_stats(Tensor({1}, {5.0f}, 0));
  EXPECT_EQ(one.mean[0], 5.0f);
}

TEST(ChannelStats, MatchesBruteForceScan) {
  for (std::size_t axis : {0u, 1u, 2u}) {
    auto t = random_tensor({40, 50, 50}, axis, 10 + axis);
    auto s = ahcq::channel_stats(t);
    const std::size_t c = t.dims()[axis];
    for (std::size_t ch = 0; ch < c; ++ch) {
      float lo = std::numeric_limits<float>::infinity(), hi = -lo;
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < 50; ++j)
          for (std::size_t k = 0; k < 50; ++k) {
            const std::size_t idx[3] = {i, j, k};
            if (idx[axis] != ch) continue;
            const float v = t[(i * 50 + j) * 50 + k];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
            ++n;
          }
      EXPECT_EQ(s.min[ch], lo);
      EXPECT_EQ(s.max[ch], hi);
      EXPECT_NEAR(s.mean[ch], sum / n, 1e-5);
      EXPECT_LE(s.min[ch], s.mean[ch]);
      EXPECT_LE(s.mean[ch], s.max[ch]);
    }
  }
}

TEST(Container, RoundTripIsIdentity) {
  auto t = random_tensor({3, 5, 2}, 1, 7);
  auto bytes = ahcq::container::write(t);
  auto back = ahcq::container::read(bytes);
  EXPECT_EQ(back, t);
  EXPECT_EQ(ahcq::container::write(back), bytes);
  EXPECT_EQ(bytes.size(), 4u + 2 + 1 + 1 + 1 + 3 * 4 + 30 * 4);
}

TEST(Container, LayoutIsLittleEndian) {
  auto bytes = ahcq::container::write(Tensor({2}, {1.0f, -2.0f}, 0));
  const std::vector<std::uint8_t> expect = {'A', 'H', 'C', 'T', 1, 0, 0, 1, 0, 2, 0, 0, 0,
                                            0,   0,   0x80, 0x3f, 0, 0, 0, 0xc0};
  EXPECT_EQ(bytes, expect);
}

TEST(Container, RejectsCorruptInput) {
  auto bytes = ahcq::container::write(random_tensor({4, 4}, 0, 9));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(ahcq::container::read(bad), ahcq::FormatError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(ahcq::container::read(bad), ahcq::FormatError);
  bad = bytes;
  bad.pop_back();
  EXPECT_THROW(ahcq::container::read(bad), ahcq::FormatError);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(ahcq::container::read(bad), ahcq::FormatError);
  bad = bytes;
  bad[9] = 5;  // first extent 4 -> 5
  EXPECT_THROW(ahcq::container::read(bad), ahcq::FormatError);
  EXPECT_THROW(ahcq::container::read(std::vector<std::uint8_t>{'A', 'H'}), ahcq::FormatError);
}

TEST(Rng, StreamsAreIndependentAndReproducible) {
  ahcq::rng::Stream a(42, 1), b(42, 1), c(42, 2), d(43, 1);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    EXPECT_NE(x, c.next_u64());
    EXPECT_NE(x, d.next_u64());
  }
  EXPECT_EQ(ahcq::rng::Stream(42, 1).u64_at(57), [] {
    ahcq::rng::Stream s(42, 1);
    for (int i = 0; i < 57; ++i) s.next_u64();
    return s.next_u64();
  }());
}

TEST(Rng, SplitMixReferenceValue) {
  // SplitMix64 seeded with 0 yields mix(golden) first.
  EXPECT_EQ(ahcq::rng::mix(0x9E3779B97F4A7C15ULL), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, UniformMomentsAndNormalQuantiles) {
  ahcq::rng::Stream s(5, 0);
  double m = 0.0, m2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    m += u;
  }
  EXPECT_NEAR(m / n, 0.5, 0.003);
  m = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = s.normal();
    m += z;
    m2 += z * z;
  }
  EXPECT_NEAR(m / n, 0.0, 0.01);
  EXPECT_NEAR(m2 / n, 1.0, 0.01);
  EXPECT_NEAR(ahcq::rng::inverse_normal_cdf(0.975), 1.959963984540054, 1e-8);
  EXPECT_NEAR(ahcq::rng::inverse_normal_cdf(0.5), 0.0, 1e-12);
  EXPECT_NEAR(ahcq::rng::inverse_normal_cdf(1e-6), -4.753424308822899, 1e-7);
}
