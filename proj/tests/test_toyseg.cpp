#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ttaloop/metrics.hpp"
#include "ttaloop/pipeline.hpp"
#include "ttaloop/synth.hpp"
#include "ttaloop/toyseg.hpp"

using namespace ttaloop;

namespace {

struct Batch {
  std::array<double, kWeights> w{};
  std::vector<FeatureRow> rows;
  std::vector<double> targets;
  std::vector<double> weights;
};

Batch random_batch(std::mt19937_64& rng, std::size_t n, bool binary) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Batch b;
  for (auto& w : b.w) w = nd(rng);
  for (std::size_t i = 0; i < n; ++i) {
    FeatureRow r;
    for (int f = 0; f < kRawFeatures; ++f) r[static_cast<std::size_t>(f)] = nd(rng);
    r[kRawFeatures] = 1.0;
    b.rows.push_back(r);
    b.targets.push_back(binary ? (u(rng) < 0.5 ? 0.0 : 1.0) : u(rng));
    b.weights.push_back(0.2 + 1.8 * u(rng));
  }
  return b;
}

// Weighted mean of -(t log s + (1 - t) log(1 - s)), s = sigmoid(w . x).
double ce_oracle(const Batch& b, bool weighted) {
  double sum = 0.0;
  for (std::size_t i = 0; i < b.rows.size(); ++i) {
    double z = 0.0;
    for (int k = 0; k < kWeights; ++k) z += b.w[static_cast<std::size_t>(k)] * b.rows[i][static_cast<std::size_t>(k)];
    const double s = 1.0 / (1.0 + std::exp(-z));
    const double t = b.targets[i];
    sum += (weighted ? b.weights[i] : 1.0) * -(t * std::log(s) + (1.0 - t) * std::log(1.0 - s));
  }
  return sum / static_cast<double>(b.rows.size());
}

Phantom phantom(std::uint64_t seed) {
  PhantomSpec spec;
  spec.geometry = Geometry{{24, 24, 24}, {1, 1, 1}};
  return gen_phantom(spec, seed);
}

}  // namespace

TEST(Schedule, CycleStartsMidpointAndRestarts) {
  const RestartSchedule s{0.1, 0.001, 10, 2, 3};
  EXPECT_DOUBLE_EQ(lr_at(s, 0), 0.1);
  EXPECT_DOUBLE_EQ(lr_at(s, 5), (0.1 + 0.001) / 2.0);
  EXPECT_DOUBLE_EQ(lr_at(s, 10), 0.1);       // second cycle, 20 epochs long
  EXPECT_DOUBLE_EQ(lr_at(s, 20), (0.1 + 0.001) / 2.0);
  EXPECT_DOUBLE_EQ(lr_at(s, 30), 0.1);
  EXPECT_GT(lr_at(s, 9), 0.001);
  EXPECT_LT(lr_at(s, 9), lr_at(s, 8));
  EXPECT_EQ(s.total_epochs(), 70);
  EXPECT_THROW(lr_at(s, -1), ArgumentError);
  EXPECT_THROW(lr_at(RestartSchedule{0.1, 0.2, 10, 1, 1}, 0), ValidationError);
}

TEST(Loss, MatchesCrossEntropyOracle) {
  std::mt19937_64 rng(1);
  for (bool binary : {true, false}) {
    const Batch b = random_batch(rng, 40, binary);
    EXPECT_NEAR(loss_and_gradient(b.w, b.rows, b.targets, nullptr), ce_oracle(b, false), 1e-12);
    EXPECT_NEAR(loss_and_gradient(b.w, b.rows, b.targets, nullptr, b.weights), ce_oracle(b, true),
                1e-12);
  }
}

TEST(Loss, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(2);
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const Batch b = random_batch(rng, 16 + trial, trial % 2 == 0);
    std::span<const double> sw = trial % 3 == 0 ? std::span<const double>() : std::span<const double>(b.weights);
    std::array<double, kWeights> g{};
    loss_and_gradient(b.w, b.rows, b.targets, &g, sw);
    for (int k = 0; k < kWeights; ++k) {
      auto plus = b.w, minus = b.w;
      plus[static_cast<std::size_t>(k)] += h;
      minus[static_cast<std::size_t>(k)] -= h;
      const double numeric = (loss_and_gradient(plus, b.rows, b.targets, nullptr, sw) -
                              loss_and_gradient(minus, b.rows, b.targets, nullptr, sw)) /
                             (2.0 * h);
      const double analytic = g[static_cast<std::size_t>(k)];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      EXPECT_LT(rel, 1e-4) << "trial " << trial << " weight " << k;
    }
  }
}

TEST(Features, InteriorBoxMeansAndSliceCoordinate) {
  const Geometry g{{5, 5, 5}, {1, 1, 1}};
  Volume v(g);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = u(rng);
  const auto f = compute_features(v);
  const std::size_t c = g.index(2, 2, 2);
  double m1 = 0.0;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) m1 += v.at(2 + dz, 2 + dy, 2 + dx);
  EXPECT_NEAR(f[c][0], v[c], 1e-6);
  EXPECT_NEAR(f[c][1], m1 / 27.0, 1e-5);
  EXPECT_NEAR(f[c][3], v[c] * v[c], 1e-6);
  EXPECT_NEAR(f[c][4], 0.5, 1e-6);
  EXPECT_NEAR(f[g.index(4, 0, 0)][4], 1.0, 1e-6);
}

TEST(Training, DeterministicPerSeedAndLearnsThePhantom) {
  std::vector<TrainingCase> cases;
  for (std::uint64_t s = 1; s <= 3; ++s) {
    const Phantom p = phantom(s);
    cases.push_back(labeled_training_case("p" + std::to_string(s), p.volume, p.truth));
  }
  const RestartSchedule sched{0.5, 0.005, 10, 1, 2};
  const TrainResult a = train(cases, sched, {}, 9);
  const TrainResult b = train(cases, sched, {}, 9);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(model_digest(a.model), model_digest(b.model));
  EXPECT_NE(train(cases, sched, {}, 10).model, a.model);
  EXPECT_EQ(a.epoch_loss.size(), static_cast<std::size_t>(sched.total_epochs()));
  EXPECT_LT(a.epoch_loss.back(), a.epoch_loss.front());

  const Phantom test = phantom(42);
  const ProbMap p = predict_soft(a.model, test.volume);
  EXPECT_EQ(p.geometry(), test.volume.geometry());
  for (std::size_t i = 0; i < p.size(); ++i) {
    ASSERT_GT(p[i], 0.0f);
    ASSERT_LT(p[i], 1.0f);
  }
  EXPECT_GT(dice(binarize(p), test.truth), 0.8);

  const ToyModel tuned = fine_tune(a.model, cases, sched, {}, 9).model;
  EXPECT_EQ(tuned, fine_tune(a.model, cases, sched, {}, 9).model);
  EXPECT_EQ(tuned.stats, a.model.stats);
}

TEST(Training, SoftTargetsAreAccepted) {
  const Phantom p = phantom(5);
  ProbMap soft(p.truth.geometry());
  for (std::size_t i = 0; i < soft.size(); ++i) soft[i] = p.truth[i] ? 0.8f : 0.1f;
  const std::vector<TrainingCase> cases{TrainingCase{"s", p.volume, soft}};
  EXPECT_NO_THROW(train(cases, RestartSchedule{0.5, 0.005, 5, 1, 1}, {}, 1));
  const std::vector<TrainingCase> unlabeled{TrainingCase{"u", p.volume, std::nullopt}};
  EXPECT_THROW(train(unlabeled, RestartSchedule{0.5, 0.005, 5, 1, 1}, {}, 1), ValidationError);
}

TEST(Model, JsonRoundTripKeepsDigest) {
  std::vector<TrainingCase> cases;
  const Phantom p = phantom(7);
  cases.push_back(labeled_training_case("a", p.volume, p.truth));
  const ToyModel m = train(cases, RestartSchedule{0.5, 0.005, 5, 1, 1}, {}, 3).model;
  const ToyModel back = toy_model_from_json(to_json(m));
  EXPECT_EQ(back, m);
  EXPECT_EQ(model_digest(back), model_digest(m));
  const RestartSchedule s{0.3, 0.01, 7, 2, 4};
  EXPECT_EQ(schedule_from_json(to_json(s)), s);
}
