#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttaloop/curate.hpp"
#include "ttaloop/pipeline.hpp"
#include "ttaloop/quality.hpp"
#include "ttaloop/report.hpp"
#include "ttaloop/synth.hpp"
#include "ttaloop/toyseg.hpp"
#include "ttaloop/tta.hpp"

namespace ttaloop {

enum class StudyId { st_only, transfer_al_st, highvar };

const char* to_string(StudyId s);
StudyId parse_study_id(const std::string& s);

// Everything a study run depends on. The digest of its canonical JSON form
// identifies the run; equal digests give byte-identical outputs.
struct StudyConfig {
  StudyId study = StudyId::st_only;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4};

  PhantomSpec phantom;  // source-domain family; shift fields are ignored
  int n_base = 6;
  int n_pool = 24;
  int n_test = 12;     // in-distribution test cases per seed
  int n_ood_test = 12;
  ShiftKind ood_shift = ShiftKind::contrast_shift;
  double ood_magnitude = 0.8;
  // transfer study only: the new domain used for pool, test and baseline
  double target_magnitude = 0.5;
  int n_target_train = 30;

  int ensemble_size = 16;
  std::uint64_t ensemble_seed = 7;
  TtaConfig tta;
  Aggregator aggregator = Aggregator::mean;
  bool include_identity = true;
  PseudoLabelMode pseudo_mode = PseudoLabelMode::tta_median_soft;
  std::optional<double> floor;

  int k = 0;             // AL budget of the main AL arms
  int k_borders = 0;     // AL budget of the border-annotated arm (transfer study)
  bool borders_in_combined_arm = false;  // highvar AL+ST arm

  RestartSchedule teacher_schedule{0.5, 0.005, 30, 1, 3};
  RestartSchedule round_schedule{0.2, 0.002, 10, 1, 2};
  TrainOptions train;
  int oracle_jitter = 0;
  AggregationMode aggregation = AggregationMode::run_level;

  void validate() const;
};

// Defaults mirroring each study's arm structure and sizes.
StudyConfig default_study_config(StudyId id);

nlohmann::json to_json(const StudyConfig& c);
StudyConfig study_config_from_json(const nlohmann::json& j);
std::string config_digest(const StudyConfig& c);

struct ArmRecord {
  std::uint64_t seed = 0;
  std::string arm;
  std::string model_digest;
  std::optional<SelectionPlan> plan;
  std::optional<TrainSet> trainset;
};

struct StudyResult {
  StudyConfig config;
  TtaEnsemble ensemble;
  std::vector<CaseMetricsRow> rows;  // ordered by seed, arm, domain, case
  std::vector<ArmRecord> arms;
};

// Arm names in table order for a study.
std::vector<std::string> study_arms(StudyId id);

StudyResult run_study(const StudyConfig& config);

// Evaluates a model on labeled cases, one row per case.
std::vector<CaseMetricsRow> evaluate_model(const ToyModel& model, std::span<const LoadedCase> cases,
                                           const std::string& arm, const std::string& domain,
                                           std::uint64_t seed);

nlohmann::json to_json(const ArmRecord& a);

}  // namespace ttaloop
