#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "ahcq/cag.hpp"
#include "ahcq/calibration.hpp"
#include "ahcq/datagen.hpp"
#include "ahcq/rng.hpp"

namespace cag = ahcq::cag;
using cag::Point;

namespace {

std::vector<Point> random_points(std::size_t n, std::uint64_t seed) {
  ahcq::rng::Stream r(seed, 0);
  std::vector<Point> pts(n);
  for (auto& p : pts) p = {r.uniform(0.1, 5.0), std::round(r.uniform(0.0, 15.0))};
  return pts;
}

}  // namespace

TEST(KMeans, TwoSeparatedPairs) {
  std::vector<Point> pts{{1.0, 0}, {1.1, 0}, {5.0, 2}, {5.2, 2}};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto r = cag::kmeans(pts, 2, seed);
    ASSERT_EQ(r.centroids.size(), 2u);
    EXPECT_DOUBLE_EQ(r.centroids[0].s, 1.05);
    EXPECT_DOUBLE_EQ(r.centroids[0].z, 0.0);
    EXPECT_DOUBLE_EQ(r.centroids[1].s, 5.1);
    EXPECT_DOUBLE_EQ(r.centroids[1].z, 2.0);
    EXPECT_EQ(r.assignment, (std::vector<int>{0, 0, 1, 1}));
  }
}

TEST(KMeans, EachPointOwnCentroid) {
  auto pts = random_points(12, 3);
  auto r = cag::kmeans(pts, 12, 1);
  EXPECT_EQ(r.distortion.back(), 0.0);
  EXPECT_EQ(cag::distortion(pts, r.centroids, r.assignment), 0.0);
}

TEST(KMeans, ReducesKToDistinctPoints) {
  std::vector<Point> pts{{1, 1}, {1, 1}, {2, 2}};
  auto r = cag::kmeans(pts, 3, 0);
  EXPECT_TRUE(r.reduced);
  EXPECT_EQ(r.centroids.size(), 2u);
  EXPECT_EQ(r.requested_k, 3);
}

TEST(KMeans, DistortionNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto pts = random_points(200, 100 + seed);
    for (int k : {2, 4, 8, 16}) {
      for (auto f : {cag::Features::raw, cag::Features::standardized}) {
        auto r = cag::kmeans(pts, k, seed, f);
        for (std::size_t i = 1; i < r.distortion.size(); ++i) EXPECT_LE(r.distortion[i], r.distortion[i - 1]);
      }
    }
  }
}

TEST(KMeans, BeatsRandomAssignments) {
  auto pts = random_points(64, 7);
  auto r = cag::kmeans(pts, 4, 0);
  const double got = cag::distortion(pts, r.centroids, r.assignment);
  ahcq::rng::Stream s(99, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> a(64);
    for (auto& x : a) x = static_cast<int>(s.below(4));
    std::vector<Point> c(4);
    std::vector<int> n(4, 0);
    for (std::size_t i = 0; i < 64; ++i) {
      c[a[i]].s += pts[i].s;
      c[a[i]].z += pts[i].z;
      ++n[a[i]];
    }
    for (int g = 0; g < 4; ++g)
      if (n[g]) c[g] = {c[g].s / n[g], c[g].z / n[g]};
    EXPECT_LE(got, cag::distortion(pts, c, a));
  }
}

TEST(KMeans, CentroidsAscendingAndDeterministic) {
  auto pts = random_points(100, 5);
  auto a = cag::kmeans(pts, 6, 11), b = cag::kmeans(pts, 6, 11);
  EXPECT_EQ(a.centroids, b.centroids);
  EXPECT_EQ(a.assignment, b.assignment);
  for (std::size_t i = 1; i < a.centroids.size(); ++i) EXPECT_LE(a.centroids[i - 1].s, a.centroids[i].s);
}

TEST(Grouping, IdenticalBlocksAreLossless) {
  std::vector<ahcq::QuantParams> ps;
  const ahcq::QuantParams blocks[3] = {ahcq::QuantParams::uniform(0.5, 3, 4), ahcq::QuantParams::uniform(2.0, 8, 4),
                                       ahcq::QuantParams::uniform(0.125, 0, 4)};
  for (int c = 0; c < 12; ++c) ps.push_back(blocks[(c * 7) % 3]);
  auto pc = ahcq::ParamSet::per_channel(ps);
  auto g = cag::apply_grouping(pc, 3, 4);
  auto pg = cag::to_param_set(g, 4);
  ahcq::rng::Stream r(1, 0);
  std::vector<float> v(50 * 12);
  for (auto& x : v) x = static_cast<float>(r.uniform(-10, 10));
  ahcq::Tensor t({50, 12}, v, 1);
  EXPECT_EQ(ahcq::quantize_tensor(t, pc), ahcq::quantize_tensor(t, pg));
  EXPECT_EQ(ahcq::quantization_mse(t, pc), ahcq::quantization_mse(t, pg));
}

TEST(Grouping, AllGroupsEqualsPerChannel) {
  ahcq::datagen::FixtureSpec spec;
  spec.kind = ahcq::datagen::FixtureKind::channel_varied;
  spec.dims = {64, 32};
  auto t = ahcq::datagen::gen(spec);
  auto pc = ahcq::calibration::mse_init(t, 4, ahcq::Granularity::per_channel);
  auto g = cag::apply_grouping(pc, 32, 0);
  auto pg = cag::to_param_set(g, 4);
  EXPECT_EQ(ahcq::quantize_tensor(t, pc), ahcq::quantize_tensor(t, pg));
}

TEST(Grouping, ReorderIsStableGroupSort) {
  auto pts = random_points(40, 9);
  auto g = cag::group_points(pts, 4, 2);
  g.validate();
  for (std::size_t j = 1; j < g.reorder.size(); ++j) {
    const int a = g.group_of[g.reorder[j - 1]], b = g.group_of[g.reorder[j]];
    EXPECT_TRUE(a < b || (a == b && g.reorder[j - 1] < g.reorder[j]));
  }
}

TEST(Grouping, SerializationRoundTrip) {
  auto g = cag::group_points(random_points(30, 1), 5, 3);
  ahcq::kv::Document doc;
  cag::write_grouping(doc, g);
  EXPECT_EQ(cag::read_grouping(ahcq::kv::parse(doc.str())), g);
  auto text = doc.str();
  text.replace(text.find("groups = 5"), 10, "groups = 6");
  EXPECT_THROW(cag::read_grouping(ahcq::kv::parse(text)), ahcq::FormatError);
}

TEST(Grouping, RefinementNeverIncreasesError) {
  ahcq::datagen::FixtureSpec spec;
  spec.kind = ahcq::datagen::FixtureKind::channel_varied;
  spec.dims = {128, 64};
  spec.seed = 3;
  auto t = ahcq::datagen::gen(spec);
  auto pc = ahcq::calibration::mse_init(t, 4, ahcq::Granularity::per_channel);
  for (int k : {2, 4, 8}) {
    auto g = cag::apply_grouping(pc, k, 0);
    const double before = ahcq::quantization_mse(t, cag::to_param_set(g, 4));
    const double after = ahcq::quantization_mse(t, cag::refine_groups(t, g, 4));
    EXPECT_LE(after, before);
    EXPECT_EQ(ahcq::quantization_mse(t, cag::to_param_set(g, 4)), after);
  }
}

TEST(Schedule, Validation) {
  EXPECT_NO_THROW((cag::MilestoneSchedule{2000, {{500, 64}, {1000, 16}, {1500, 4}}}.validate()));
  EXPECT_NO_THROW((cag::MilestoneSchedule{10, {}}.validate()));
  EXPECT_THROW((cag::MilestoneSchedule{2000, {{500, 16}, {1000, 64}}}.validate()), ahcq::ParameterError);
  EXPECT_THROW((cag::MilestoneSchedule{2000, {{1000, 64}, {500, 16}}}.validate()), ahcq::ParameterError);
  EXPECT_THROW((cag::MilestoneSchedule{2000, {{2500, 4}}}.validate()), ahcq::ParameterError);
  EXPECT_THROW((cag::MilestoneSchedule{2000, {{0, 4}}}.validate()), ahcq::ParameterError);
}

TEST(Schedule, GeometricAndParse) {
  auto s = cag::MilestoneSchedule::geometric(2000, 4);
  EXPECT_EQ(s.str(), "500:64 1000:16 1500:4");
  EXPECT_EQ(cag::MilestoneSchedule::parse(2000, s.str()).milestones, s.milestones);
  EXPECT_EQ(cag::MilestoneSchedule::geometric(2000, 32).str(), "500:64 1500:32");
  EXPECT_THROW(cag::MilestoneSchedule::parse(2000, "500-64"), ahcq::ConfigError);
}

TEST(Storage, FourGroupsAt18Bits) {
  auto c = cag::storage_cost(256, 4, 18);
  EXPECT_EQ(c.register_bits, 144);
  EXPECT_EQ(c.dram_bytes, 18);
}

TEST(Storage, ReductionFormula) {
  EXPECT_NEAR(cag::storage_cost(2048, 4, 18).reduction, 0.998046875, 1e-15);
  EXPECT_EQ(cag::storage_cost(64, 64, 18).reduction, 0.0);
  EXPECT_EQ(cag::storage_cost(2048, 4, 18).baseline_bits / cag::storage_cost(2048, 4, 18).register_bits, 512);
  EXPECT_THROW(cag::storage_cost(4, 8, 18), ahcq::ParameterError);
  EXPECT_THROW(cag::storage_cost(4, 0, 18), ahcq::ParameterError);
}
