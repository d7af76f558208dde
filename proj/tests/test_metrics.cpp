#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "ttaloop/metrics.hpp"

using namespace ttaloop;

namespace {

Mask single(const Geometry& g, int z, int y, int x) {
  Mask m(g);
  m.at(z, y, x) = 1;
  return m;
}

}  // namespace

TEST(Dice, IdenticalAndEmptyMasksScoreOne) {
  const Geometry g{{2, 3, 4}, {1, 1, 1}};
  Mask a(g);
  EXPECT_EQ(dice(a, a), 1.0);
  a.at(1, 2, 3) = 1;
  EXPECT_EQ(dice(a, a), 1.0);
}

TEST(Dice, HalfOverlap) {
  const Geometry g{{1, 1, 4}, {1, 1, 1}};
  Mask a(g), b(g);
  a[0] = a[1] = 1;
  b[1] = b[2] = 1;
  EXPECT_DOUBLE_EQ(dice(a, b), 0.5);
  EXPECT_EQ(dice(a, b), dice(b, a));
}

TEST(Dice, GeometryMismatchThrows) {
  Mask a(Geometry{{2, 2, 2}, {1, 1, 1}}), b(Geometry{{2, 2, 3}, {1, 1, 1}});
  EXPECT_THROW(dice(a, b), ShapeError);
}

TEST(Binarize, ThresholdIsInclusive) {
  ProbMap p(Geometry{{1, 1, 3}, {1, 1, 1}});
  p[0] = 0.49f;
  p[1] = 0.50f;
  p[2] = 0.51f;
  const Mask m = binarize(p);
  EXPECT_EQ(m[0], 0);
  EXPECT_EQ(m[1], 1);
  EXPECT_EQ(m[2], 1);
}

TEST(Binarize, RaisingThresholdNeverAddsVoxels) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  ProbMap p(Geometry{{4, 4, 4}, {1, 1, 1}});
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = u(rng);
  for (double t = 0.0; t < 1.0; t += 0.1) {
    const Mask lo = binarize(p, t), hi = binarize(p, t + 0.1);
    for (std::size_t i = 0; i < p.size(); ++i) EXPECT_LE(hi[i], lo[i]);
  }
}

TEST(SurfaceVoxels, SingleVoxelAndSolidCube) {
  const Geometry g{{3, 3, 3}, {1, 1, 1}};
  EXPECT_EQ(surface_voxels(single(g, 1, 1, 1)).size(), 1u);
  Mask cube(g, 1);
  const auto s = surface_voxels(cube);
  EXPECT_EQ(s.size(), 26u);
  for (const auto& v : s) EXPECT_FALSE(v[0] == 1 && v[1] == 1 && v[2] == 1);
}

TEST(Hausdorff95, OneVoxelApartAlongX) {
  const Geometry g{{1, 1, 3}, {1, 1, 1}};
  const auto h = hausdorff95(single(g, 0, 0, 0), single(g, 0, 0, 1));
  ASSERT_TRUE(h);
  EXPECT_DOUBLE_EQ(*h, 1.0);
}

TEST(Hausdorff95, UsesAnisotropicSpacing) {
  const Geometry g{{3, 1, 1}, {2.5, 1, 1}};
  EXPECT_DOUBLE_EQ(*hausdorff95(single(g, 0, 0, 0), single(g, 2, 0, 0)), 5.0);
}

TEST(Hausdorff95, EmptyMaskIsUndefined) {
  const Geometry g{{2, 2, 2}, {1, 1, 1}};
  EXPECT_FALSE(hausdorff95(Mask(g), single(g, 0, 0, 0)));
  EXPECT_FALSE(hausdorff95(Mask(g), Mask(g)));
}

TEST(Assd2d, TwoVoxelsApartWithInPlaneSpacing) {
  const Geometry g{{1, 1, 5}, {1.0, 1.5, 1.5}};
  const auto a = assd2d(single(g, 0, 0, 0), single(g, 0, 0, 2));
  ASSERT_TRUE(a);
  EXPECT_DOUBLE_EQ(*a, 3.0);
}

TEST(Assd2d, OneSidedSlicesAreSkippedOrPenalised) {
  const Geometry g{{2, 3, 3}, {1, 1, 1}};
  Mask a(g), b(g);
  a.at(0, 1, 1) = b.at(0, 1, 1) = 1;
  a.at(1, 0, 0) = 1;  // slice 1 holds foreground only in a
  EXPECT_DOUBLE_EQ(*assd2d(a, b), 0.0);
  EXPECT_DOUBLE_EQ(*assd2d(a, b, OneSidedSlice::diagonal_penalty), std::hypot(2.0, 2.0) / 2.0);
  Mask only_a(g);
  only_a.at(1, 0, 0) = 1;
  EXPECT_FALSE(assd2d(only_a, b));
}

TEST(Metrics, IdenticalNonemptyMasksHaveZeroDistance) {
  std::mt19937_64 rng(5);
  const Geometry g{{4, 5, 6}, {1.5, 0.7, 0.9}};
  Mask a = oracle::random_mask(g, 0.4, rng);
  a[0] = 1;
  EXPECT_EQ(*hausdorff95(a, a), 0.0);
  EXPECT_EQ(*assd2d(a, a), 0.0);
}

// Every mask pair up to 6x6x6 against the exhaustive scans.
TEST(Metrics, MatchBruteForceOracles) {
  std::mt19937_64 rng(20260101);
  std::uniform_real_distribution<double> density(0.05, 0.9);
  for (int trial = 0; trial < 300; ++trial) {
    const Geometry g = oracle::random_geometry(rng);
    const Mask a = oracle::random_mask(g, density(rng), rng);
    const Mask b = oracle::random_mask(g, density(rng), rng);
    EXPECT_EQ(dice(a, b), oracle::dice(a, b));

    const auto sa = surface_voxels(a);
    const auto oa = oracle::surface(a);
    ASSERT_EQ(sa.size(), oa.size());
    for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i], oa[i]);

    const auto h = hausdorff95(a, b);
    const auto oh = oracle::hausdorff95(a, b);
    ASSERT_EQ(h.has_value(), oh.has_value());
    if (h) {
      EXPECT_NEAR(*h, *oh, 1e-9);
    }
    EXPECT_EQ(h, hausdorff95(b, a));

    const auto s = assd2d(a, b);
    const auto os = oracle::assd2d(a, b);
    ASSERT_EQ(s.has_value(), os.has_value());
    if (s) {
      EXPECT_NEAR(*s, *os, 1e-9);
    }
  }
}

TEST(Metrics, EvaluateBundlesAllThree) {
  const Geometry g{{3, 3, 3}, {1, 1, 1}};
  const MetricResult r = evaluate_metrics(single(g, 1, 1, 1), single(g, 1, 1, 1));
  EXPECT_EQ(r.dice, 1.0);
  EXPECT_EQ(r.hausdorff95_mm, 0.0);
  EXPECT_EQ(r.assd2d_mm, 0.0);
}
