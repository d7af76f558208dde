#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttaloop/curate.hpp"
#include "ttaloop/quality.hpp"
#include "ttaloop/synth.hpp"
#include "ttaloop/toyseg.hpp"
#include "ttaloop/tta.hpp"

namespace ttaloop {

struct LoadedCase {
  std::string case_id;
  std::string domain_tag;
  Volume volume;
  std::optional<Mask> truth;
  std::optional<SliceRange> border;  // annotated border slices, when known
};

// Hard-label training case from the case's ground truth / manual label.
TrainingCase labeled_training_case(const LoadedCase& c);
TrainingCase labeled_training_case(const std::string& case_id, const Volume& v, const Mask& label);

struct AssessOptions {
  QualityOptions quality;
  PseudoLabelMode pseudo_mode = PseudoLabelMode::tta_median_soft;
  bool borders = false;  // restrict QE and correct pseudo-labels with case borders
};

// TTA inference, median vote and quality estimate for every pool case. Only
// the pseudo-label candidate of each case is kept, not the full ensemble.
struct PoolAssessment {
  std::vector<QualityReport> reports;
  std::vector<ProbMap> candidates;  // same order as reports
};

PoolAssessment assess_case(const Segmenter& seg, const LoadedCase& c, const TtaEnsemble& e,
                           const AssessOptions& options, PoolAssessment into = {});
PoolAssessment assess_pool(const Segmenter& seg, std::span<const LoadedCase> pool,
                           const TtaEnsemble& e, const AssessOptions& options);

struct RoundSpec {
  std::size_t k = 0;
  bool self_training = true;
  bool random_selection = false;  // annotate k seeded random cases instead of the k worst
  bool borders = false;           // border slices were annotated (recorded in the train set)
  std::optional<double> floor;
  OracleConfig oracle;
  RestartSchedule schedule;
  TrainOptions train;
  std::uint64_t seed = 0;
};

struct RoundResult {
  ToyModel model;
  SelectionPlan plan;
  TrainSet trainset;
};

// Selection step alone: k cases for annotation (quality-ranked or seeded
// random), pseudo-labels filtered with the auto threshold at
// n_labeled = n_base + k. With self-training off every non-AL case is excluded.
SelectionPlan plan_round(std::size_t n_base, std::span<const LoadedCase> pool,
                         const PoolAssessment& assessment, const RoundSpec& spec);

struct RoundData {
  std::vector<TrainingCase> cases;  // base, then AL, then ST
  TrainSet trainset;
};

// D_base ∪ D_AL ∪ D_ST for a plan. `al_labels` holds a manual mask for every
// AL id. Record refs are "memory:" placeholders; callers persisting the set
// substitute their own paths.
RoundData assemble_round(std::span<const TrainingCase> base, std::span<const LoadedCase> pool,
                         const PoolAssessment& assessment, const SelectionPlan& plan,
                         const std::map<std::string, Mask>& al_labels, const RoundSpec& spec);

ToyModel train_round(const ToyModel& base_model, std::span<const TrainingCase> cases,
                     const RoundSpec& spec);

// The combined round: plan, annotate the AL cases with the oracle, assemble
// and fine-tune the base model. `assessment` may be empty when neither
// self-training nor quality-ranked selection is requested.
RoundResult run_round(const ToyModel& base_model, std::span<const TrainingCase> base,
                      std::span<const LoadedCase> pool, const PoolAssessment& assessment,
                      const AnnotationOracle& oracle, const RoundSpec& spec);

// Seeded choice of k ids, returned in pool order.
std::vector<std::string> random_selection(std::span<const LoadedCase> pool, std::size_t k,
                                          std::uint64_t seed);

}  // namespace ttaloop
