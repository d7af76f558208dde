#include "ttaloop/toyseg.hpp"

#include <cmath>

#include "ttaloop/format.hpp"
#include "ttaloop/rng.hpp"

namespace ttaloop {

using nlohmann::json;

void RestartSchedule::validate() const {
  if (!(eta_min > 0.0) || !(eta_max > eta_min)) {
    throw ValidationError("restart schedule needs 0 < eta_min < eta_max");
  }
  if (t0 < 1) throw ValidationError("restart schedule t0 must be >= 1");
  if (t_mult < 1) throw ValidationError("restart schedule t_mult must be >= 1");
  if (total_cycles < 0) throw ValidationError("restart schedule total_cycles must be >= 0");
}

int RestartSchedule::total_epochs() const {
  long long total = 0, len = t0;
  for (int c = 0; c < total_cycles; ++c) {
    total += len;
    len *= t_mult;
  }
  return static_cast<int>(total);
}

double lr_at(const RestartSchedule& s, int epoch) {
  s.validate();
  if (epoch < 0) throw ArgumentError("epoch must be >= 0");
  long long t_i = s.t0;
  long long t_cur = epoch;
  if (s.t_mult == 1) {
    t_cur %= t_i;
  } else {
    while (t_cur >= t_i) {
      t_cur -= t_i;
      t_i *= s.t_mult;
    }
  }
  const double phase = static_cast<double>(t_cur) / static_cast<double>(t_i);
  return s.eta_min + 0.5 * (s.eta_max - s.eta_min) * (1.0 + std::cos(M_PI * phase));
}

namespace {

// Mean over [i-r, i+r] clipped to the grid, along one axis, in place.
void box_mean_axis(std::vector<double>& grid, const Geometry& g, int axis, int r) {
  const int n = g.shape[axis];
  std::size_t stride = 1;
  for (int d = axis + 1; d < 3; ++d) stride *= g.shape[d];
  const std::size_t block = stride * n;
  std::vector<double> prefix(n + 1);
  for (std::size_t base = 0; base < grid.size(); base += block) {
    for (std::size_t off = 0; off < stride; ++off) {
      const std::size_t start = base + off;
      prefix[0] = 0.0;
      for (int i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + grid[start + i * stride];
      for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - r);
        const int hi = std::min(n - 1, i + r);
        grid[start + i * stride] = (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1);
      }
    }
  }
}

std::vector<double> box_mean(const Volume& v, int r) {
  std::vector<double> grid(v.data().begin(), v.data().end());
  for (int axis = 0; axis < 3; ++axis) box_mean_axis(grid, v.geometry(), axis, r);
  return grid;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct Sample {
  RawFeatures features;
  double target;
  double weight;  // inverse sampling probability, mean 1 within a case
};

// Equal draws per class keep foreground represented; the weights undo the
// stratification so the sampled loss estimates the mean over all voxels.
std::vector<Sample> draw_samples(std::span<const TrainingCase> cases, const TrainOptions& options,
                                 std::uint64_t seed) {
  std::vector<Sample> samples;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const TrainingCase& tc = cases[c];
    if (!tc.target) throw ValidationError("training case " + tc.case_id + " has no label");
    require_same_geometry(tc.volume.geometry(), tc.target->geometry(), "training case");
    validate(*tc.target);
    const auto feats = compute_features(tc.volume);
    const auto target = tc.target->data();
    std::vector<std::size_t> fg, bg;
    for (std::size_t i = 0; i < target.size(); ++i) (target[i] >= 0.5f ? fg : bg).push_back(i);
    Rng rng(mix_seed(seed, tc.case_id));
    const int per_class = options.samples_per_class;
    const double n = static_cast<double>(target.size());
    auto take = [&](const std::vector<std::size_t>& from, int count, double weight) {
      for (int k = 0; k < count; ++k) {
        const std::size_t i = from[rng.below(from.size())];
        samples.push_back({feats[i], static_cast<double>(target[i]), weight});
      }
    };
    if (fg.empty() || bg.empty()) {
      take(fg.empty() ? bg : fg, 2 * per_class, 1.0);
    } else {
      take(fg, per_class, 2.0 * static_cast<double>(fg.size()) / n);
      take(bg, per_class, 2.0 * static_cast<double>(bg.size()) / n);
    }
  }
  return samples;
}

FeatureStats stats_of(const std::vector<Sample>& samples) {
  FeatureStats s;
  const double n = static_cast<double>(samples.size());
  for (int f = 0; f < kRawFeatures; ++f) {
    double sum = 0.0;
    for (const auto& x : samples) sum += x.features[f];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& x : samples) ss += (x.features[f] - mean) * (x.features[f] - mean);
    const double sd = std::sqrt(ss / n);
    s.mean[f] = mean;
    s.stddev[f] = sd > 1e-8 ? sd : 1.0;
  }
  return s;
}

TrainResult optimise(ToyModel model, const std::vector<Sample>& samples,
                     const RestartSchedule& schedule, const TrainOptions& options,
                     std::uint64_t seed) {
  schedule.validate();
  if (options.batch_size < 1) throw ValidationError("batch size must be >= 1");
  std::vector<FeatureRow> rows;
  std::vector<double> targets, weights;
  rows.reserve(samples.size());
  for (const auto& s : samples) {
    rows.push_back(model.normalise(s.features));
    targets.push_back(s.target);
    weights.push_back(s.weight);
  }
  TrainResult result;
  Rng rng(mix_seed(seed, "sgd-order"));
  std::vector<std::size_t> order(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<FeatureRow> batch_rows;
  std::vector<double> batch_targets, batch_weights;
  std::array<double, kWeights> grad{};
  const int epochs = schedule.total_epochs();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = lr_at(schedule, epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      batch_rows.clear();
      batch_targets.clear();
      batch_weights.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch_rows.push_back(rows[order[k]]);
        batch_targets.push_back(targets[order[k]]);
        batch_weights.push_back(weights[order[k]]);
      }
      loss_and_gradient(model.weights, batch_rows, batch_targets, &grad, batch_weights);
      for (int w = 0; w < kWeights; ++w) model.weights[w] -= lr * grad[w];
    }
    result.epoch_loss.push_back(loss_and_gradient(model.weights, rows, targets, nullptr, weights));
  }
  result.model = model;
  return result;
}

}  // namespace

std::vector<RawFeatures> compute_features(const Volume& v) {
  const Geometry& g = v.geometry();
  const auto smooth1 = box_mean(v, 1);
  const auto smooth2 = box_mean(v, 2);
  std::vector<RawFeatures> out(g.voxels());
  const auto d = v.data();
  const std::size_t plane = g.slice_voxels();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int z = static_cast<int>(i / plane);
    const float zn = g.nz() > 1 ? static_cast<float>(z) / static_cast<float>(g.nz() - 1) : 0.0f;
    out[i] = {d[i], static_cast<float>(smooth1[i]), static_cast<float>(smooth2[i]), d[i] * d[i], zn};
  }
  return out;
}

FeatureRow ToyModel::normalise(const RawFeatures& f) const {
  FeatureRow row{};
  for (int k = 0; k < kRawFeatures; ++k) row[k] = (f[k] - stats.mean[k]) / stats.stddev[k];
  row[kRawFeatures] = 1.0;
  return row;
}

double loss_and_gradient(const std::array<double, kWeights>& weights,
                         std::span<const FeatureRow> rows, std::span<const double> targets,
                         std::array<double, kWeights>* gradient,
                         std::span<const double> sample_weights) {
  if (rows.size() != targets.size() || rows.empty()) {
    throw ArgumentError("loss needs matching, non-empty rows and targets");
  }
  if (!sample_weights.empty() && sample_weights.size() != rows.size()) {
    throw ArgumentError("sample weights must match the rows");
  }
  double loss = 0.0;
  std::array<double, kWeights> g{};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double z = 0.0;
    for (int w = 0; w < kWeights; ++w) z += weights[w] * rows[i][w];
    const double sw = sample_weights.empty() ? 1.0 : sample_weights[i];
    loss += sw * (softplus(z) - targets[i] * z);
    if (gradient) {
      const double residual = sw * (sigmoid(z) - targets[i]);
      for (int w = 0; w < kWeights; ++w) g[w] += residual * rows[i][w];
    }
  }
  const double n = static_cast<double>(rows.size());
  if (gradient) {
    for (int w = 0; w < kWeights; ++w) (*gradient)[w] = g[w] / n;
  }
  return loss / n;
}

TrainResult train(std::span<const TrainingCase> cases, const RestartSchedule& schedule,
                  const TrainOptions& options, std::uint64_t seed) {
  if (cases.empty()) throw ValidationError("training set is empty");
  const auto samples = draw_samples(cases, options, mix_seed(seed, "samples"));
  ToyModel model;
  model.stats = stats_of(samples);
  return optimise(model, samples, schedule, options, seed);
}

TrainResult fine_tune(const ToyModel& base, std::span<const TrainingCase> cases,
                      const RestartSchedule& schedule, const TrainOptions& options,
                      std::uint64_t seed) {
  if (cases.empty()) throw ValidationError("training set is empty");
  const auto samples = draw_samples(cases, options, mix_seed(seed, "samples"));
  return optimise(base, samples, schedule, options, seed);
}

ProbMap predict_soft(const ToyModel& model, const Volume& v) {
  const auto feats = compute_features(v);
  ProbMap out(v.geometry());
  auto d = out.data();
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const FeatureRow row = model.normalise(feats[i]);
    double z = 0.0;
    for (int w = 0; w < kWeights; ++w) z += model.weights[w] * row[w];
    d[i] = static_cast<float>(sigmoid(z));
  }
  return out;
}

json to_json(const ToyModel& m) {
  json w = json::array(), mean = json::array(), sd = json::array();
  for (double x : m.weights) w.push_back(x);
  for (double x : m.stats.mean) mean.push_back(x);
  for (double x : m.stats.stddev) sd.push_back(x);
  return json{{"kind", "toy-logistic"},
              {"features", {"intensity", "box_mean_r1", "box_mean_r2", "intensity_sq", "z_norm"}},
              {"weights", w},
              {"feature_mean", mean},
              {"feature_std", sd}};
}

ToyModel toy_model_from_json(const json& j) {
  ToyModel m;
  try {
    const auto w = j.at("weights").get<std::vector<double>>();
    const auto mean = j.at("feature_mean").get<std::vector<double>>();
    const auto sd = j.at("feature_std").get<std::vector<double>>();
    if (w.size() != kWeights || mean.size() != kRawFeatures || sd.size() != kRawFeatures) {
      throw ValidationError("toy model has the wrong number of parameters");
    }
    for (int k = 0; k < kWeights; ++k) m.weights[k] = w[k];
    for (int k = 0; k < kRawFeatures; ++k) {
      m.stats.mean[k] = mean[k];
      m.stats.stddev[k] = sd[k];
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("toy model: ") + e.what());
  }
  for (double x : m.weights)
    if (!std::isfinite(x)) throw ValidationError("toy model weight is not finite");
  return m;
}

json to_json(const RestartSchedule& s) {
  return json{{"eta_max", s.eta_max},
              {"eta_min", s.eta_min},
              {"t0", s.t0},
              {"t_mult", s.t_mult},
              {"total_cycles", s.total_cycles}};
}

RestartSchedule schedule_from_json(const json& j) {
  RestartSchedule s;
  try {
    s.eta_max = j.at("eta_max").get<double>();
    s.eta_min = j.at("eta_min").get<double>();
    s.t0 = j.at("t0").get<int>();
    s.t_mult = j.at("t_mult").get<int>();
    s.total_cycles = j.at("total_cycles").get<int>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("restart schedule: ") + e.what());
  }
  s.validate();
  return s;
}

std::string model_digest(const ToyModel& m) {
  std::string canonical;
  for (double x : m.weights) canonical += format_double(x) + ";";
  for (double x : m.stats.mean) canonical += format_double(x) + ";";
  for (double x : m.stats.stddev) canonical += format_double(x) + ";";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical)));
  return buf;
}

}  // namespace ttaloop
