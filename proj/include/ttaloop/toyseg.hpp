#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttaloop/segmenter.hpp"
#include "ttaloop/volume.hpp"

namespace ttaloop {

// Cosine annealing with warm restarts. Cycle c lasts t0 * t_mult^c epochs;
// within a cycle lr = eta_min + (eta_max - eta_min) * (1 + cos(pi * t_cur / t_i)) / 2.
struct RestartSchedule {
  double eta_max = 0.5;
  double eta_min = 0.005;
  int t0 = 10;
  int t_mult = 1;
  int total_cycles = 1;

  void validate() const;
  int total_epochs() const;
  bool operator==(const RestartSchedule&) const = default;
};

double lr_at(const RestartSchedule& s, int epoch);

// Per-voxel features: intensity, box means over radius 1 and 2 (clamped at
// the grid edge), intensity squared, z / (nz - 1). A bias term is implicit.
inline constexpr int kRawFeatures = 5;
inline constexpr int kWeights = kRawFeatures + 1;

using RawFeatures = std::array<float, kRawFeatures>;
using FeatureRow = std::array<double, kWeights>;  // normalised, last entry = 1

std::vector<RawFeatures> compute_features(const Volume& v);

struct FeatureStats {
  std::array<double, kRawFeatures> mean{};
  std::array<double, kRawFeatures> stddev{1.0, 1.0, 1.0, 1.0, 1.0};
  bool operator==(const FeatureStats&) const = default;
};

struct ToyModel {
  std::array<double, kWeights> weights{};
  FeatureStats stats;

  FeatureRow normalise(const RawFeatures& f) const;
  bool operator==(const ToyModel&) const = default;
};

struct TrainOptions {
  int samples_per_class = 256;  // per case, drawn once per training run
  int batch_size = 64;
};

struct TrainingCase {
  std::string case_id;
  Volume volume;
  std::optional<ProbMap> target;  // hard masks enter as 0/1 maps
};

struct TrainResult {
  ToyModel model;
  std::vector<double> epoch_loss;  // mean loss over the sample set after each epoch
};

// Fresh model: normalisation statistics from the sampled voxels, zero weights.
TrainResult train(std::span<const TrainingCase> cases, const RestartSchedule& schedule,
                  const TrainOptions& options, std::uint64_t seed);

// Continues from `base` (weights and normalisation statistics).
TrainResult fine_tune(const ToyModel& base, std::span<const TrainingCase> cases,
                      const RestartSchedule& schedule, const TrainOptions& options,
                      std::uint64_t seed);

ProbMap predict_soft(const ToyModel& model, const Volume& v);

// Soft-target cross-entropy averaged over rows, each row scaled by its sample
// weight (all 1 when `sample_weights` is empty), and its gradient w.r.t. weights.
double loss_and_gradient(const std::array<double, kWeights>& weights,
                         std::span<const FeatureRow> rows, std::span<const double> targets,
                         std::array<double, kWeights>* gradient,
                         std::span<const double> sample_weights = {});

class ToySegmenter : public Segmenter {
 public:
  explicit ToySegmenter(ToyModel model) : model_(std::move(model)) {}
  ProbMap predict_soft(const Volume& v) const override { return ttaloop::predict_soft(model_, v); }
  const ToyModel& model() const { return model_; }

 private:
  ToyModel model_;
};

nlohmann::json to_json(const ToyModel& m);
ToyModel toy_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RestartSchedule& s);
RestartSchedule schedule_from_json(const nlohmann::json& j);

// Hex digest of the canonical serialisation.
std::string model_digest(const ToyModel& m);

}  // namespace ttaloop
