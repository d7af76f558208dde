#include <gtest/gtest.h>

#include <random>
#include <set>

#include "ttaloop/tta.hpp"

using namespace ttaloop;

namespace {

Volume random_volume(const Geometry& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Volume v(g);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng);
  return v;
}

// Returns the (already [0,1]) input as its own prediction.
class EchoSegmenter : public Segmenter {
 public:
  ProbMap predict_soft(const Volume& v) const override {
    return ProbMap(v.geometry(), std::vector<float>(v.data().begin(), v.data().end()));
  }
};

class FailingSegmenter : public Segmenter {
 public:
  explicit FailingSegmenter(int fail_at) : fail_at_(fail_at) {}
  ProbMap predict_soft(const Volume& v) const override {
    if (calls_++ == fail_at_) throw std::runtime_error("boom");
    return ProbMap(v.geometry(), 0.5f);
  }

 private:
  int fail_at_;
  mutable int calls_ = 0;
};

class WrongShapeSegmenter : public Segmenter {
 public:
  ProbMap predict_soft(const Volume& v) const override {
    Geometry g = v.geometry();
    g.shape[0] += 1;
    return ProbMap(g, 0.5f);
  }
};

}  // namespace

TEST(Ensemble, IdentityFirstAndDistinctPermutations) {
  const TtaEnsemble e = enumerate_transforms(16, 7);
  ASSERT_EQ(e.size(), 16u);
  EXPECT_TRUE(e.transforms[0].is_geometric_identity());
  EXPECT_TRUE(e.transforms[0].intensity.is_identity());
  EXPECT_EQ(distinct_geometric_ops(), 16);

  // Members 1..15 cover the 15 non-identity permutations once each: compare
  // the voxel order they produce on a volume with unique values.
  const Geometry g{{3, 4, 4}, {1, 1, 1}};
  Volume ids(g);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<float>(i);
  std::set<std::vector<float>> seen;
  for (const auto& t : e.transforms) {
    const Volume moved = apply_fwd_geom(t, ids);
    seen.insert(std::vector<float>(moved.data().begin(), moved.data().end()));
  }
  EXPECT_EQ(seen.size(), 16u);
}

TEST(Ensemble, SeededAndWithinConfiguredRanges) {
  TtaConfig c;
  c.gamma_min = 0.8;
  c.gamma_max = 1.2;
  c.scale_min = 0.85;
  c.scale_max = 1.15;
  c.shift_min = -0.1;
  c.shift_max = 0.1;
  const TtaEnsemble a = enumerate_transforms(16, 11, c);
  EXPECT_EQ(a, enumerate_transforms(16, 11, c));
  EXPECT_NE(a, enumerate_transforms(16, 12, c));
  for (std::size_t i = 1; i < a.size(); ++i) {
    const IntensityOp& op = a.transforms[i].intensity;
    if (op.kind == IntensityOp::Kind::gamma) {
      EXPECT_GE(op.gamma, c.gamma_min);
      EXPECT_LE(op.gamma, c.gamma_max);
    } else {
      ASSERT_EQ(op.kind, IntensityOp::Kind::linear);
      EXPECT_GE(op.scale, c.scale_min);
      EXPECT_LE(op.scale, c.scale_max);
      EXPECT_GE(op.shift, c.shift_min);
      EXPECT_LE(op.shift, c.shift_max);
    }
  }
}

TEST(Ensemble, SizeOneIsIdentityOnlyAndZeroIsRejected) {
  const TtaEnsemble e = enumerate_transforms(1, 3);
  ASSERT_EQ(e.size(), 1u);
  EXPECT_TRUE(e.transforms[0].is_geometric_identity());
  EXPECT_THROW(enumerate_transforms(0, 3), ArgumentError);
}

TEST(Ensemble, JsonRoundTrip) {
  const TtaEnsemble e = enumerate_transforms(20, 5);
  EXPECT_EQ(ensemble_from_json(to_json(e)), e);
  const TtaConfig c{0.7, 1.3, 0.8, 1.2, -0.2, 0.1};
  EXPECT_EQ(tta_config_from_json(to_json(c)), c);
}

TEST(Transforms, InverseOfForwardIsBitIdentical) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> ext(1, 7);
  for (int trial = 0; trial < 40; ++trial) {
    const Geometry g{{ext(rng), ext(rng), ext(rng)}, {1.0, 0.5 + trial % 3, 1.0}};
    const Volume v = random_volume(g, static_cast<std::uint64_t>(trial));
    for (const auto& t : enumerate_transforms(16, static_cast<std::uint64_t>(trial)).transforms) {
      const Volume fwd = apply_fwd_geom(t, v);
      EXPECT_EQ(fwd.geometry(), forward_geometry(t, g));
      EXPECT_EQ(apply_inv_geom(t, fwd), v);
    }
  }
}

TEST(Transforms, ZFlipMovesSlices) {
  const Geometry g{{3, 1, 1}, {1, 1, 1}};
  Volume v(g);
  v[0] = 1.0f;
  v[1] = 2.0f;
  v[2] = 3.0f;
  TtaTransform t;
  t.flip = {true, false, false};
  const Volume f = apply_fwd_geom(t, v);
  EXPECT_EQ(f[0], 3.0f);
  EXPECT_EQ(f[2], 1.0f);
}

TEST(Transforms, InverseChecksGeometry) {
  TtaTransform t;
  t.rot90_k = 1;
  const Geometry g{{2, 3, 5}, {1, 1, 1}};
  const ProbMap wrong(g, 0.5f);  // forward of g would be 2x5x3
  EXPECT_THROW(apply_inv_geom(t, wrong, g), ShapeError);
}

TEST(TtaInfer, EchoSegmenterRecoversInputWithoutContrastOps) {
  TtaConfig flat{1.0, 1.0, 1.0, 1.0, 0.0, 0.0};
  const TtaEnsemble e = enumerate_transforms(16, 4, flat);
  const Volume v = random_volume(Geometry{{3, 4, 5}, {1, 1, 1}}, 8);
  const auto preds = tta_infer(EchoSegmenter(), v, e);
  ASSERT_EQ(preds.size(), 16u);
  for (const auto& p : preds) {
    ASSERT_EQ(p.geometry(), v.geometry());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(p[i], v[i]);
  }
}

TEST(TtaInfer, FailuresNameTheMember) {
  const TtaEnsemble e = enumerate_transforms(16, 4);
  const Volume v = random_volume(Geometry{{2, 3, 3}, {1, 1, 1}}, 1);
  try {
    tta_infer(FailingSegmenter(5), v, e);
    FAIL() << "expected SegmenterError";
  } catch (const SegmenterError& ex) {
    EXPECT_EQ(ex.transform_id(), e.transforms[5].id);
  }
  EXPECT_THROW(tta_infer(WrongShapeSegmenter(), v, e), SegmenterError);
}

TEST(Intensity, IdentityOpLeavesVolumeUnchanged) {
  const Volume v = random_volume(Geometry{{2, 2, 2}, {1, 1, 1}}, 3);
  EXPECT_EQ(apply_intensity(IntensityOp{}, v), v);
}
