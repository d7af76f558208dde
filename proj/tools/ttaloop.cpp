// ttaloop: command-line front end of the TTA / active learning / self-training
// pipeline. Exit codes: 0 success, 2 invalid input, 3 waiting for worklist
// labels, 1 anything else.

#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ttaloop/external.hpp"
#include "ttaloop/study.hpp"
#include "ttaloop/svol.hpp"
#include "ttaloop/workspace.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ttaloop;

namespace {

constexpr int kExitInvalid = 2;
constexpr int kExitPending = 3;

// Run config flags shared by teacher and round commands. Each flag that is
// given overrides the same key of the --config file.
struct RunFlags {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<int> ensemble_size;
  std::optional<std::uint64_t> ensemble_seed;
  std::optional<std::string> aggregator;
  bool exclude_identity = false;
  std::optional<std::string> pseudo_mode;
  std::optional<double> floor;
  std::optional<int> oracle_jitter;
  std::optional<int> samples_per_class;
  std::optional<int> batch_size;
  // round composition
  std::optional<int> k;
  bool no_st = false;
  bool random = false;
  bool borders = false;

  void add(CLI::App* app, bool round, bool al) {
    app->add_option("--config", config_file, "run config JSON; flags below override it")
        ->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "run seed");
    app->add_option("--samples-per-class", samples_per_class, "sampled voxels per class and case");
    app->add_option("--batch-size", batch_size, "SGD batch size");
    if (!round) return;
    app->add_option("--ensemble-size", ensemble_size, "TTA members, identity included (default 16)");
    app->add_option("--ensemble-seed", ensemble_seed, "seed of the TTA ensemble");
    app->add_option("--aggregator", aggregator, "mean | median");
    app->add_flag("--exclude-identity", exclude_identity, "leave the identity member out of QE");
    app->add_option("--pseudo-mode", pseudo_mode, "tta_median_soft | plain_soft");
    app->add_option("--floor", floor, "lower bound on the auto threshold");
    if (!al) return;
    app->add_option("--k", k, "cases to annotate (AL budget)");
    app->add_flag("--no-st", no_st, "pure AL: no pseudo-labels");
    app->add_flag("--random", random, "annotate k seeded random cases instead of the k worst");
    app->add_flag("--borders", borders, "annotate border slices; QE and pseudo-labels use them");
    app->add_option("--oracle-jitter", oracle_jitter, "boundary band flipped by the oracle");
  }

  RunConfig resolve() const {
    json j = config_file.empty() ? json::object() : read_json_file(config_file);
    if (!j.is_object()) throw ValidationError("run config must be a JSON object");
    if (seed) j["seed"] = *seed;
    if (ensemble_size) j["ensemble_size"] = *ensemble_size;
    if (ensemble_seed) j["ensemble_seed"] = *ensemble_seed;
    if (aggregator) j["aggregator"] = *aggregator;
    if (exclude_identity) j["include_identity"] = false;
    if (pseudo_mode) j["pseudo_label_mode"] = *pseudo_mode;
    if (floor) j["floor"] = *floor;
    if (oracle_jitter) j["oracle_jitter"] = *oracle_jitter;
    if (samples_per_class) j["train"]["samples_per_class"] = *samples_per_class;
    if (batch_size) j["train"]["batch_size"] = *batch_size;
    if (k) j["k"] = *k;
    if (no_st) j["self_training"] = false;
    if (random) j["random_selection"] = true;
    if (borders) j["borders"] = true;
    return run_config_from_json(j);
  }
};

struct SegmenterFlags {
  std::string command;
  bool keep_jobs = false;

  void add(CLI::App* app) {
    app->add_option("--segmenter-command", command,
                    "external segmenter; '{job}' is replaced by the job directory");
    app->add_flag("--keep-jobs", keep_jobs, "keep job directories of the external segmenter");
  }
};

ToyModel load_model(const std::string& path) {
  return toy_model_from_json(read_json_file(path));
}

void print_file(const fs::path& p) { std::cout << read_text_file(p); }

struct RoundFlags {
  std::string model, base, pool, out, stop_after;
  std::string annotator = "oracle";
  std::string labels, borders_csv;
  bool train_externally = false;
  RunFlags run;
  SegmenterFlags seg;
};

int run_round_command(const RoundFlags& f, bool al) {
  RunConfig config = f.run.resolve();
  if (!al) {
    if (config.k != 0 || !config.self_training || config.random_selection || config.borders) {
      throw ValidationError("st-round takes no AL settings; use al-st-round");
    }
  }
  const ToyModel model = load_model(f.model);
  const Corpus base = read_corpus(f.base);
  const Corpus pool = read_corpus(f.pool);

  RoundOptions o;
  o.out = f.out;
  if (!f.stop_after.empty()) o.stop_after = parse_round_stage(f.stop_after);
  o.annotator = parse_annotator(f.annotator);
  if (!f.labels.empty()) o.labels_dir = fs::path(f.labels);
  if (!f.borders_csv.empty()) o.borders_csv = fs::path(f.borders_csv);
  std::unique_ptr<ExternalSegmenter> external;
  if (!f.seg.command.empty()) {
    external = std::make_unique<ExternalSegmenter>(f.seg.command, fs::path(f.out) / "jobs", f.seg.keep_jobs);
    o.segmenter = external.get();
    o.segmenter_id = "external:" + f.seg.command;
  }
  o.train_externally = f.train_externally;

  const RoundOutcome r = run_round_dir(config, model, base, pool, o);
  std::cout << "assessed " << r.assessed << " pool case(s) in this run\n";
  if (r.plan) {
    std::cout << "plan: " << r.plan->al_ids.size() << " to annotate, " << r.plan->st_ids.size()
              << " pseudo-labelled, " << r.plan->excluded_ids.size() << " excluded, threshold "
              << r.plan->threshold_used << "\n";
  }
  if (r.model) {
    std::cout << "student model written to " << (fs::path(f.out) / "model.json").string()
              << " (digest " << model_digest(*r.model) << ")\n";
  } else {
    std::cout << "stopped after stage '"
              << (r.trainset && !r.model ? "trainset" : to_string(r.reached)) << "'\n";
  }
  return 0;
}

void add_round_options(CLI::App* app, RoundFlags& f, bool al) {
  app->add_option("--model", f.model, "base model JSON")->required()->check(CLI::ExistingFile);
  app->add_option("--base", f.base, "labelled base corpus directory")->required();
  app->add_option("--pool", f.pool, "unlabelled pool corpus directory")->required();
  app->add_option("--out", f.out, "run directory")->required();
  app->add_option("--stop-after", f.stop_after, "assess | plan | train");
  app->add_flag("--train-externally", f.train_externally,
                "stop after writing trainset.json (fine-tuning happens elsewhere)");
  f.run.add(app, true, al);
  f.seg.add(app);
  if (!al) return;
  app->add_option("--annotator", f.annotator, "oracle (pool ground truth) | human (worklist)");
  app->add_option("--labels", f.labels, "human mode: directory receiving <case_id>.svol.json masks");
  app->add_option("--borders-csv", f.borders_csv, "human mode: case_id,lo,hi border slices");
}

PhantomSpec resolve_phantom(const std::string& spec_file, const std::string& variability,
                            const std::string& shift, std::optional<double> magnitude,
                            const std::vector<int>& shape, const std::vector<double>& spacing) {
  json j = spec_file.empty() ? to_json(PhantomSpec{}) : read_json_file(spec_file);
  if (!variability.empty()) j["variability"] = variability;
  if (!shift.empty()) j["shift"] = shift;
  if (magnitude) j["shift_magnitude"] = *magnitude;
  PhantomSpec spec = phantom_spec_from_json(j);
  if (!shape.empty()) {
    if (shape.size() != 3) throw ValidationError("--shape needs three extents (z y x)");
    for (int d = 0; d < 3; ++d) spec.geometry.shape[static_cast<std::size_t>(d)] = shape[static_cast<std::size_t>(d)];
  }
  if (!spacing.empty()) {
    if (spacing.size() != 3) throw ValidationError("--spacing needs three values (z y x)");
    for (int d = 0; d < 3; ++d)
      spec.geometry.spacing_mm[static_cast<std::size_t>(d)] = spacing[static_cast<std::size_t>(d)];
  }
  spec.validate();
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TTA-based active learning and self-training for volumetric segmentation"};
  app.require_subcommand(1);

  // gen-corpus
  auto* gen = app.add_subcommand("gen-corpus", "generate a seeded phantom corpus");
  std::string gen_out, gen_prefix = "case", gen_tag = "source", gen_spec, gen_var, gen_shift;
  int gen_count = 6;
  std::uint64_t gen_seed = 1;
  std::optional<double> gen_mag;
  std::vector<int> gen_shape;
  std::vector<double> gen_spacing;
  bool gen_no_labels = false;
  gen->add_option("--out", gen_out, "corpus directory")->required();
  gen->add_option("--count", gen_count, "number of cases");
  gen->add_option("--seed", gen_seed, "corpus seed");
  gen->add_option("--prefix", gen_prefix, "case id prefix");
  gen->add_option("--domain-tag", gen_tag, "domain tag stored with every case");
  gen->add_option("--spec", gen_spec, "phantom spec JSON")->check(CLI::ExistingFile);
  gen->add_option("--variability", gen_var, "low | high");
  gen->add_option("--shift", gen_shift, "none | contrast_shift | crop_fov");
  gen->add_option("--magnitude", gen_mag, "shift magnitude in [0, 1)");
  gen->add_option("--shape", gen_shape, "z y x extents")->expected(3);
  gen->add_option("--spacing", gen_spacing, "z y x spacing in mm")->expected(3);
  gen->add_flag("--no-labels", gen_no_labels, "omit ground-truth labels");

  // teacher
  auto* teacher = app.add_subcommand("teacher", "train a teacher on a labelled base corpus");
  std::string teacher_base, teacher_out;
  RunFlags teacher_run;
  teacher->add_option("--base", teacher_base, "labelled base corpus directory")->required();
  teacher->add_option("--out", teacher_out, "output directory")->required();
  teacher_run.add(teacher, false, false);

  // rounds
  auto* st = app.add_subcommand("st-round", "self-training round: TTA, QE, auto threshold, fine-tune");
  RoundFlags st_flags;
  add_round_options(st, st_flags, false);
  auto* alst = app.add_subcommand("al-st-round", "combined active learning and self-training round");
  RoundFlags alst_flags;
  add_round_options(alst, alst_flags, true);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score a model or stored predictions on a test corpus");
  std::string eval_model, eval_test, eval_out, eval_pred, eval_arm = "model", eval_domain;
  std::string eval_mode = "per-case";
  std::uint64_t eval_seed = 0;
  SegmenterFlags eval_seg;
  eval->add_option("--model", eval_model, "model JSON")->check(CLI::ExistingFile);
  eval->add_option("--predictions", eval_pred, "directory of <case_id>.svol.json predictions");
  eval_seg.add(eval);
  eval->add_option("--test", eval_test, "labelled test corpus directory")->required();
  eval->add_option("--out", eval_out, "report directory")->required();
  eval->add_option("--arm", eval_arm, "arm name written to the tables");
  eval->add_option("--domain", eval_domain, "domain written to the tables (default: case tags)");
  eval->add_option("--seed", eval_seed, "seed written to the tables");
  eval->add_option("--aggregation", eval_mode, "per-case | run-level");

  // study
  auto* study = app.add_subcommand("study", "run a multi-seed study with all its arms");
  std::string study_id, study_out, study_config, study_mode;
  std::vector<std::uint64_t> study_seeds;
  study->add_option("--study", study_id, "st-only | transfer-al-st | highvar")->required();
  study->add_option("--out", study_out, "study directory")->required();
  study->add_option("--config", study_config, "study config JSON")->check(CLI::ExistingFile);
  study->add_option("--seeds", study_seeds, "seeds (default 1 2 3 4)");
  study->add_option("--aggregation", study_mode, "per-case | run-level");

  // report
  auto* report = app.add_subcommand("report", "recompute tables from per_case.csv");
  std::string report_in, report_mode;
  report->add_option("--in", report_in, "study or evaluation directory")->required();
  report->add_option("--mode", report_mode, "per-case | run-level (default: recorded mode)");

  // predict
  auto* predict = app.add_subcommand("predict", "serve an external-segmenter job with a toy model");
  std::string predict_model, predict_job;
  predict->add_option("--model", predict_model, "model JSON")->required()->check(CLI::ExistingFile);
  predict->add_option("--job", predict_job, "job directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  try {
    if (*gen) {
      CorpusOptions o;
      o.spec = resolve_phantom(gen_spec, gen_var, gen_shift, gen_mag, gen_shape, gen_spacing);
      o.seed = gen_seed;
      o.count = gen_count;
      o.prefix = gen_prefix;
      o.domain_tag = gen_tag;
      o.labels = !gen_no_labels;
      const Corpus c = generate_corpus(gen_out, o);
      std::cout << "wrote " << c.cases.size() << " case(s) to " << gen_out << " (digest "
                << corpus_digest(c) << ")\n";
    } else if (*teacher) {
      const RunConfig config = teacher_run.resolve();
      const ToyModel m = run_teacher(config, read_corpus(teacher_base), teacher_out);
      std::cout << "teacher written to " << (fs::path(teacher_out) / "model.json").string()
                << " (digest " << model_digest(m) << ")\n";
    } else if (*st) {
      return run_round_command(st_flags, false);
    } else if (*alst) {
      return run_round_command(alst_flags, true);
    } else if (*eval) {
      const int sources = !eval_model.empty() + !eval_pred.empty() + !eval_seg.command.empty();
      if (sources != 1) {
        throw ValidationError("evaluate needs exactly one of --model, --predictions, --segmenter-command");
      }
      const AggregationMode mode = parse_aggregation_mode(eval_mode);
      const Corpus test = read_corpus(eval_test);
      std::unique_ptr<Segmenter> seg;
      json source;
      if (!eval_model.empty()) {
        ToyModel m = load_model(eval_model);
        source = {{"model_digest", model_digest(m)}};
        seg = std::make_unique<ToySegmenter>(std::move(m));
      } else if (!eval_seg.command.empty()) {
        seg = std::make_unique<ExternalSegmenter>(eval_seg.command, fs::path(eval_out) / "jobs",
                                                  eval_seg.keep_jobs);
        source = {{"segmenter_command", eval_seg.command}};
      } else {
        source = {{"predictions", eval_pred}};
      }
      const Evaluation ev = evaluate_corpus(
          test, seg.get(), eval_pred.empty() ? std::nullopt : std::optional<fs::path>(eval_pred),
          eval_arm, eval_domain, eval_seed);
      json failures = json::array();
      for (const auto& f : ev.failures) {
        failures.push_back({{"case_id", f.case_id}, {"error", f.error}});
        std::cerr << "case " << f.case_id << ": " << f.error << "\n";
      }
      write_text_file(fs::path(eval_out) / "evaluation.json",
                      json{{"source", source},
                           {"test_digest", corpus_digest(test)},
                           {"arm", eval_arm},
                           {"seed", eval_seed},
                           {"aggregation", to_string(mode)},
                           {"evaluated", ev.rows.size()},
                           {"failures", failures}}
                              .dump(2) + "\n");
      write_report_tables(eval_out, ev.rows, mode);
      print_file(fs::path(eval_out) / "comparison.csv");
      if (!ev.failures.empty()) {
        std::cerr << ev.failures.size() << " case(s) could not be evaluated\n";
      }
    } else if (*study) {
      json j = study_config.empty() ? to_json(default_study_config(parse_study_id(study_id)))
                                    : read_json_file(study_config);
      if (!j.is_object()) throw ValidationError("study config must be a JSON object");
      if (j.contains("study") && j["study"] != study_id) {
        throw ValidationError("config file describes study '" + j["study"].get<std::string>() + "'");
      }
      j["study"] = study_id;
      if (!study_seeds.empty()) j["seeds"] = study_seeds;
      if (!study_mode.empty()) j["aggregation"] = study_mode;
      const StudyConfig config = study_config_from_json(j);
      const StudyResult result = run_study(config);
      write_study_dir(study_out, result);
      std::cout << "study " << study_id << " (config digest " << config_digest(config) << ")\n";
      print_file(fs::path(study_out) / "comparison.csv");
    } else if (*report) {
      std::optional<AggregationMode> mode;
      if (!report_mode.empty()) mode = parse_aggregation_mode(report_mode);
      rebuild_report(report_in, mode);
      print_file(fs::path(report_in) / "comparison.csv");
    } else if (*predict) {
      const std::size_t n = serve_job(ToySegmenter(load_model(predict_model)), predict_job);
      std::cout << "wrote " << n << " prediction(s)\n";
    }
  } catch (const PendingAnnotation& e) {
    std::cerr << "waiting for annotations: " << e.what() << "\n";
    return kExitPending;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ConflictError& e) {
    std::cerr << "conflict: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const ShapeError& e) {
    std::cerr << "geometry mismatch: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
