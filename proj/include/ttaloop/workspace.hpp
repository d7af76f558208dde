#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttaloop/curate.hpp"
#include "ttaloop/pipeline.hpp"
#include "ttaloop/report.hpp"
#include "ttaloop/segmenter.hpp"
#include "ttaloop/study.hpp"

namespace ttaloop {

// ---- corpora ---------------------------------------------------------------

// A directory of svol cases described by `<dir>/corpus.json`:
//   {"generator": {...} | null, "cases": [CaseRecord, ...]}
// Record refs are relative to the directory. Pool corpora may carry labels;
// the pipeline only reads them through the annotation oracle.
struct Corpus {
  std::filesystem::path root;
  nlohmann::json generator;  // spec and seed when generated, null otherwise
  std::vector<CaseRecord> cases;
};

struct CorpusOptions {
  PhantomSpec spec;
  std::uint64_t seed = 1;
  int count = 6;
  std::string prefix = "case";
  std::string domain_tag = "source";
  bool labels = true;
};

// Case i is "<prefix>-<iii>", drawn from gen_phantom(spec, mix_seed(seed, id)).
Corpus generate_corpus(const std::filesystem::path& dir, const CorpusOptions& options);
Corpus read_corpus(const std::filesystem::path& dir);
void write_corpus_manifest(const Corpus& c);
// Digest of the manifest; independent of where the corpus lives.
std::string corpus_digest(const Corpus& c);

// Loads every case. `require_labels` turns a missing label into a
// ValidationError; otherwise labels are loaded when present.
std::vector<LoadedCase> load_corpus(const Corpus& c, bool require_labels);

// ---- pipeline runs ---------------------------------------------------------

// Settings of teacher and round commands. Its digest is stored in every
// output of a run.
struct RunConfig {
  std::uint64_t seed = 1;
  int ensemble_size = 16;
  std::uint64_t ensemble_seed = 7;
  TtaConfig tta;
  Aggregator aggregator = Aggregator::mean;
  bool include_identity = true;
  PseudoLabelMode pseudo_mode = PseudoLabelMode::tta_median_soft;
  std::optional<double> floor;
  int k = 0;
  bool self_training = true;
  bool random_selection = false;
  bool borders = false;
  RestartSchedule teacher_schedule{0.5, 0.005, 30, 1, 3};
  RestartSchedule round_schedule{0.2, 0.002, 10, 1, 2};
  TrainOptions train;
  int oracle_jitter = 0;

  void validate() const;
};

nlohmann::json to_json(const RunConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
std::string run_config_digest(const RunConfig& c);

std::string hex_digest(const std::string& bytes);

// Trains a teacher on a labelled corpus and writes `<out>/model.json` and
// `<out>/teacher.json`.
ToyModel run_teacher(const RunConfig& config, const Corpus& base, const std::filesystem::path& out);

enum class RoundStage { assess, plan, train };

const char* to_string(RoundStage s);
RoundStage parse_round_stage(const std::string& s);

enum class Annotator { oracle, human };

const char* to_string(Annotator a);
Annotator parse_annotator(const std::string& s);

struct RoundOptions {
  std::filesystem::path out;
  std::optional<RoundStage> stop_after;
  Annotator annotator = Annotator::oracle;
  // Human mode: where `<case_id>.svol.json` masks appear (default <out>/labels).
  std::optional<std::filesystem::path> labels_dir;
  // Human mode with borders: CSV case_id,lo,hi covering the pool.
  std::optional<std::filesystem::path> borders_csv;
  // Predicts in place of the input model during TTA inference. The model is
  // then only used for fine-tuning; with `train_externally` the round stops
  // after writing the train set.
  const Segmenter* segmenter = nullptr;
  std::string segmenter_id = "toy";  // enters the run stamp
  bool train_externally = false;
};

struct RoundOutcome {
  RoundStage reached = RoundStage::assess;
  std::size_t assessed = 0;  // pool cases inferred in this invocation
  std::optional<SelectionPlan> plan;
  std::optional<TrainSet> trainset;
  std::optional<ToyModel> model;
};

// Resumable round in a run directory:
//   run.json                 config, digests of inputs, run stamp
//   ensemble.json
//   assess/<id>.json         quality report (commit marker of the case)
//   assess/<id>.pseudo.svol  pseudo-label candidate
//   quality.csv, plan.json, worklist.csv
//   labels/<id>.svol         manual labels of the AL cases
//   trainset.json, model.json, round.json
// Finished per-case work is reused; a directory holding a different run is
// rejected. Throws PendingAnnotation in human mode while labels are missing
// (after writing the worklist).
RoundOutcome run_round_dir(const RunConfig& config, const ToyModel& model, const Corpus& base,
                           const Corpus& pool, const RoundOptions& options);

// ---- evaluation and reports ------------------------------------------------

struct CaseFailure {
  std::string case_id;
  std::string error;
};

struct Evaluation {
  std::vector<CaseMetricsRow> rows;
  std::vector<CaseFailure> failures;
};

// Scores each test case; a case whose prediction cannot be produced or has the
// wrong geometry is recorded as a failure and the rest continue. Predictions
// come from `seg`, or with `predictions_dir` from `<dir>/<case_id>.svol.json`
// (prob or mask kind).
Evaluation evaluate_corpus(const Corpus& test, const Segmenter* seg,
                           const std::optional<std::filesystem::path>& predictions_dir,
                           const std::string& arm, const std::string& domain, std::uint64_t seed);

// per_case.csv, per_seed.csv, aggregate.csv, comparison.csv; returns the
// aggregate rows.
std::vector<AggregateRow> write_report_tables(const std::filesystem::path& out,
                                              std::span<const CaseMetricsRow> rows,
                                              AggregationMode mode);

// Everything of a finished study: config.json (with digest), ensemble.json,
// arms.json and the report tables. Refuses a directory whose config.json
// carries another digest.
void write_study_dir(const std::filesystem::path& out, const StudyResult& result);

// Recomputes the tables of a study or evaluation directory from its
// per_case.csv; the mode defaults to the one recorded in config.json.
std::vector<AggregateRow> rebuild_report(const std::filesystem::path& dir,
                                         std::optional<AggregationMode> mode);

// Writes `text` to `path` through a temporary sibling and a rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace ttaloop
