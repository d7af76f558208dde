#include "ttaloop/workspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "ttaloop/format.hpp"
#include "ttaloop/metrics.hpp"
#include "ttaloop/rng.hpp"
#include "ttaloop/svol.hpp"

namespace ttaloop {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- files -----------------------------------------------------------------

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::string hex_digest(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

namespace {

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string generic(const fs::path& p) { return p.lexically_normal().generic_string(); }

// Path of `target` as seen from `from`, for refs stored in run manifests.
std::string ref_from(const fs::path& from, const fs::path& target) {
  return generic(fs::absolute(target).lexically_relative(fs::absolute(from)));
}

template <typename T>
void get_opt(const json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

}  // namespace

// ---- corpora ---------------------------------------------------------------

void write_corpus_manifest(const Corpus& c) {
  json cases = json::array();
  for (const auto& r : c.cases) cases.push_back(to_json(r));
  write_text_file(c.root / "corpus.json", dump(json{{"generator", c.generator}, {"cases", cases}}));
}

Corpus read_corpus(const fs::path& dir) {
  const fs::path manifest = dir / "corpus.json";
  if (!fs::exists(manifest)) throw ValidationError("no corpus manifest at " + manifest.string());
  const json j = read_json_file(manifest);
  Corpus c;
  c.root = dir;
  try {
    c.generator = j.value("generator", json(nullptr));
    std::set<std::string> ids;
    for (const auto& e : j.at("cases")) {
      CaseRecord r = case_record_from_json(e);
      if (!ids.insert(r.case_id).second) throw ConflictError("corpus lists " + r.case_id + " twice");
      c.cases.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ValidationError("corpus manifest " + manifest.string() + ": " + e.what());
  }
  return c;
}

std::string corpus_digest(const Corpus& c) {
  json cases = json::array();
  for (const auto& r : c.cases) cases.push_back(to_json(r));
  return hex_digest(json{{"generator", c.generator}, {"cases", cases}}.dump());
}

Corpus generate_corpus(const fs::path& dir, const CorpusOptions& o) {
  o.spec.validate();
  if (o.count < 1) throw ValidationError("corpus needs at least one case");
  if (o.prefix.empty() || o.prefix.find_first_of("/\\,") != std::string::npos) {
    throw ValidationError("case prefix must be non-empty without '/', '\\' or ','");
  }
  Corpus c;
  c.root = dir;
  c.generator = {{"spec", to_json(o.spec)}, {"seed", o.seed}, {"count", o.count},
                 {"prefix", o.prefix}, {"labels", o.labels}};
  for (int i = 0; i < o.count; ++i) {
    char num[16];
    std::snprintf(num, sizeof num, "%03d", i);
    const std::string id = o.prefix + "-" + num;
    const Phantom p = gen_phantom(o.spec, mix_seed(o.seed, id));
    CaseRecord r;
    r.case_id = id;
    r.volume_ref = "volumes/" + id + ".svol.json";
    r.domain_tag = o.domain_tag;
    write_svol(dir / r.volume_ref, p.volume);
    if (o.labels) {
      r.label_ref = "labels/" + id + ".svol.json";
      r.label_kind = LabelKind::manual_hard;
      r.border = p.border;
      write_svol(dir / *r.label_ref, p.truth);
    }
    c.cases.push_back(std::move(r));
  }
  write_corpus_manifest(c);
  return c;
}

std::vector<LoadedCase> load_corpus(const Corpus& c, bool require_labels) {
  std::vector<LoadedCase> out;
  for (const auto& r : c.cases) {
    LoadedCase lc;
    lc.case_id = r.case_id;
    lc.domain_tag = r.domain_tag;
    lc.volume = read_volume(c.root / r.volume_ref);
    if (r.label_ref) {
      lc.truth = read_mask(c.root / *r.label_ref);
      require_same_geometry(lc.volume.geometry(), lc.truth->geometry(), "corpus label");
    } else if (require_labels) {
      throw ValidationError("case " + r.case_id + " in " + c.root.string() + " has no label");
    }
    lc.border = r.border;
    if (lc.border) validate_slice_range(*lc.border, lc.volume.geometry().nz());
    out.push_back(std::move(lc));
  }
  return out;
}

// ---- run config ------------------------------------------------------------

void RunConfig::validate() const {
  if (ensemble_size < 1) throw ValidationError("ensemble size must be >= 1");
  if (k < 0) throw ValidationError("AL budget k must be >= 0");
  if (floor && !(*floor >= 0.0 && *floor <= 1.0)) throw ValidationError("floor must lie in [0, 1]");
  if (random_selection && k == 0) throw ValidationError("random selection needs k > 0");
  tta.validate();
  teacher_schedule.validate();
  round_schedule.validate();
  if (train.samples_per_class < 1 || train.batch_size < 1) {
    throw ValidationError("samples_per_class and batch_size must be >= 1");
  }
  if (oracle_jitter < 0) throw ValidationError("oracle jitter must be >= 0");
}

json to_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"ensemble_size", c.ensemble_size},
              {"ensemble_seed", c.ensemble_seed},
              {"tta", to_json(c.tta)},
              {"aggregator", to_string(c.aggregator)},
              {"include_identity", c.include_identity},
              {"pseudo_label_mode", to_string(c.pseudo_mode)},
              {"floor", c.floor ? json(*c.floor) : json(nullptr)},
              {"k", c.k},
              {"self_training", c.self_training},
              {"random_selection", c.random_selection},
              {"borders", c.borders},
              {"teacher_schedule", to_json(c.teacher_schedule)},
              {"round_schedule", to_json(c.round_schedule)},
              {"train",
               {{"samples_per_class", c.train.samples_per_class},
                {"batch_size", c.train.batch_size}}},
              {"oracle_jitter", c.oracle_jitter}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("run config must be a JSON object");
  static const std::set<std::string> known{
      "seed",     "ensemble_size",    "ensemble_seed", "tta",           "aggregator",
      "include_identity", "pseudo_label_mode", "floor", "k",            "self_training",
      "random_selection", "borders",  "teacher_schedule", "round_schedule", "train",
      "oracle_jitter"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown run config key '" + key + "'");
  }
  RunConfig c;
  try {
    get_opt(j, "seed", c.seed);
    get_opt(j, "ensemble_size", c.ensemble_size);
    get_opt(j, "ensemble_seed", c.ensemble_seed);
    if (j.contains("tta")) c.tta = tta_config_from_json(j.at("tta"));
    if (j.contains("aggregator")) c.aggregator = parse_aggregator(j.at("aggregator").get<std::string>());
    get_opt(j, "include_identity", c.include_identity);
    if (j.contains("pseudo_label_mode")) {
      c.pseudo_mode = parse_pseudo_label_mode(j.at("pseudo_label_mode").get<std::string>());
    }
    if (j.contains("floor") && !j.at("floor").is_null()) c.floor = j.at("floor").get<double>();
    get_opt(j, "k", c.k);
    get_opt(j, "self_training", c.self_training);
    get_opt(j, "random_selection", c.random_selection);
    get_opt(j, "borders", c.borders);
    if (j.contains("teacher_schedule")) c.teacher_schedule = schedule_from_json(j.at("teacher_schedule"));
    if (j.contains("round_schedule")) c.round_schedule = schedule_from_json(j.at("round_schedule"));
    if (j.contains("train")) {
      c.train.samples_per_class = j.at("train").value("samples_per_class", c.train.samples_per_class);
      c.train.batch_size = j.at("train").value("batch_size", c.train.batch_size);
    }
    get_opt(j, "oracle_jitter", c.oracle_jitter);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad run config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string run_config_digest(const RunConfig& c) { return hex_digest(to_json(c).dump()); }

// ---- teacher ---------------------------------------------------------------

ToyModel run_teacher(const RunConfig& config, const Corpus& base, const fs::path& out) {
  config.validate();
  if (base.cases.empty()) throw ValidationError("base corpus " + base.root.string() + " is empty");
  std::vector<TrainingCase> cases;
  json ids = json::array();
  for (const auto& c : load_corpus(base, true)) {
    cases.push_back(labeled_training_case(c));
    ids.push_back(c.case_id);
  }
  const TrainResult r =
      train(cases, config.teacher_schedule, config.train, mix_seed(config.seed, "teacher"));
  write_text_file(out / "model.json", dump(to_json(r.model)));
  write_text_file(out / "teacher.json",
                  dump(json{{"config", to_json(config)},
                            {"config_digest", run_config_digest(config)},
                            {"base_digest", corpus_digest(base)},
                            {"cases", ids},
                            {"model_digest", model_digest(r.model)},
                            {"final_loss", r.epoch_loss.empty() ? json(nullptr) : json(r.epoch_loss.back())}}));
  return r.model;
}

// ---- rounds ----------------------------------------------------------------

const char* to_string(RoundStage s) {
  switch (s) {
    case RoundStage::assess: return "assess";
    case RoundStage::plan: return "plan";
    case RoundStage::train: return "train";
  }
  return "?";
}

RoundStage parse_round_stage(const std::string& s) {
  if (s == "assess") return RoundStage::assess;
  if (s == "plan") return RoundStage::plan;
  if (s == "train") return RoundStage::train;
  throw ValidationError("unknown round stage '" + s + "' (assess, plan, train)");
}

const char* to_string(Annotator a) { return a == Annotator::oracle ? "oracle" : "human"; }

Annotator parse_annotator(const std::string& s) {
  if (s == "oracle") return Annotator::oracle;
  if (s == "human") return Annotator::human;
  throw ValidationError("unknown annotator '" + s + "' (oracle, human)");
}

namespace {

json report_to_json(const QualityReport& r) {
  return json{{"case_id", r.case_id},
              {"estimated_dice", r.estimated_dice},
              {"per_aug_dice", r.per_aug_dice},
              {"aggregator", to_string(r.aggregator)},
              {"roi", r.roi ? to_json(*r.roi) : json(nullptr)},
              {"ensemble_size", r.ensemble_size}};
}

QualityReport report_from_json(const json& j) {
  QualityReport r;
  r.case_id = j.at("case_id").get<std::string>();
  r.estimated_dice = j.at("estimated_dice").get<double>();
  r.per_aug_dice = j.at("per_aug_dice").get<std::vector<double>>();
  r.aggregator = parse_aggregator(j.at("aggregator").get<std::string>());
  if (!j.at("roi").is_null()) r.roi = SliceRange{j["roi"].at(0).get<int>(), j["roi"].at(1).get<int>()};
  r.ensemble_size = j.at("ensemble_size").get<int>();
  return r;
}

std::map<std::string, SliceRange> read_borders_csv(const fs::path& p) {
  std::istringstream in(read_text_file(p));
  std::string line;
  std::getline(in, line);
  std::map<std::string, SliceRange> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw ValidationError("border line needs case_id,lo,hi: " + line);
    try {
      out[f[0]] = SliceRange{std::stoi(f[1]), std::stoi(f[2])};
    } catch (const std::exception&) {
      throw ValidationError("border line has non-integer slices: " + line);
    }
  }
  return out;
}

RoundSpec round_spec_of(const RunConfig& c) {
  RoundSpec spec;
  spec.k = static_cast<std::size_t>(c.k);
  spec.self_training = c.self_training;
  spec.random_selection = c.random_selection;
  spec.borders = c.borders;
  spec.floor = c.floor;
  spec.oracle = {c.oracle_jitter, mix_seed(c.seed, "oracle")};
  spec.schedule = c.round_schedule;
  spec.train = c.train;
  spec.seed = mix_seed(c.seed, "round");
  return spec;
}

}  // namespace

RoundOutcome run_round_dir(const RunConfig& config, const ToyModel& model, const Corpus& base,
                           const Corpus& pool, const RoundOptions& options) {
  config.validate();
  const fs::path& out = options.out;
  if (base.cases.empty()) throw ValidationError("base corpus " + base.root.string() + " is empty");
  if (pool.cases.empty() && (config.k > 0 || config.self_training)) {
    throw ValidationError("pool corpus " + pool.root.string() + " is empty");
  }
  if (static_cast<std::size_t>(config.k) > pool.cases.size()) {
    throw ValidationError("AL budget k exceeds the pool size");
  }
  for (const auto& b : base.cases)
    for (const auto& p : pool.cases)
      if (b.case_id == p.case_id) throw ConflictError("case " + b.case_id + " is in base and pool");

  const std::string config_digest = run_config_digest(config);
  const json run{{"config", to_json(config)},
                 {"config_digest", config_digest},
                 {"model_digest", model_digest(model)},
                 {"base_digest", corpus_digest(base)},
                 {"pool_digest", corpus_digest(pool)},
                 {"segmenter", options.segmenter_id}};
  const std::string stamp = hex_digest(run.dump());
  if (fs::exists(out / "run.json")) {
    const json prev = read_json_file(out / "run.json");
    if (prev.value("stamp", "") != stamp) {
      throw ConflictError("run directory " + out.string() +
                            " holds a different run (config, model or corpora changed)");
    }
  } else {
    json with_stamp = run;
    with_stamp["stamp"] = stamp;
    write_text_file(out / "run.json", dump(with_stamp));
  }

  const RoundSpec spec = round_spec_of(config);
  const TtaEnsemble ensemble =
      enumerate_transforms(config.ensemble_size, config.ensemble_seed, config.tta);
  write_text_file(out / "ensemble.json", dump(to_json(ensemble)));

  std::vector<TrainingCase> base_cases;
  for (const auto& c : load_corpus(base, true)) base_cases.push_back(labeled_training_case(c));
  std::vector<LoadedCase> pool_cases = load_corpus(pool, false);

  if (config.borders && options.annotator == Annotator::human) {
    if (!options.borders_csv) throw ValidationError("human mode with borders needs a borders CSV");
    const auto borders = read_borders_csv(*options.borders_csv);
    for (auto& c : pool_cases) {
      const auto it = borders.find(c.case_id);
      if (it == borders.end()) throw ValidationError("borders CSV has no row for " + c.case_id);
      validate_slice_range(it->second, c.volume.geometry().nz());
      c.border = it->second;
    }
  } else if (config.borders) {
    for (auto& c : pool_cases) {
      if (!c.border && c.truth) c.border = oracle_border_slices(*c.truth);
      if (!c.border) throw ValidationError("no border slices known for pool case " + c.case_id);
    }
  }

  RoundOutcome outcome;
  const bool needs_quality = config.self_training || (config.k > 0 && !config.random_selection);
  PoolAssessment assessment;
  if (needs_quality) {
    std::unique_ptr<Segmenter> toy;
    const Segmenter* seg = options.segmenter;
    if (!seg) {
      toy = std::make_unique<ToySegmenter>(model);
      seg = toy.get();
    }
    AssessOptions ao;
    ao.quality = {config.aggregator, std::nullopt, config.include_identity};
    ao.pseudo_mode = config.pseudo_mode;
    ao.borders = config.borders;
    for (const auto& c : pool_cases) {
      const fs::path marker = out / "assess" / (c.case_id + ".json");
      const fs::path candidate = out / "assess" / (c.case_id + ".pseudo.svol.json");
      if (fs::exists(marker) && fs::exists(candidate)) {
        const json j = read_json_file(marker);
        if (j.value("stamp", "") == stamp) {
          try {
            assessment.reports.push_back(report_from_json(j.at("report")));
          } catch (const json::exception& e) {
            throw ValidationError("assessment " + marker.string() + ": " + e.what());
          }
          assessment.candidates.push_back(read_probmap(candidate));
          continue;
        }
      }
      const std::size_t at = assessment.reports.size();
      assessment = assess_case(*seg, c, ensemble, ao, std::move(assessment));
      write_svol(candidate, assessment.candidates[at]);
      write_text_file(marker, dump(json{{"stamp", stamp}, {"report", report_to_json(assessment.reports[at])}}));
      ++outcome.assessed;
    }
    std::ostringstream q;
    write_quality_csv(q, assessment.reports);
    write_text_file(out / "quality.csv", q.str());
  }
  outcome.reached = RoundStage::assess;
  if (options.stop_after == RoundStage::assess) return outcome;

  SelectionPlan plan = plan_round(base_cases.size(), pool_cases, assessment, spec);
  {
    // Every pool case lands in exactly one partition.
    std::set<std::string> seen;
    for (const auto* part : {&plan.al_ids, &plan.st_ids, &plan.excluded_ids})
      for (const auto& id : *part)
        if (!seen.insert(id).second) throw ValidationError("plan lists " + id + " twice");
    if (seen.size() != pool_cases.size()) throw ValidationError("plan does not cover the pool");
  }
  write_text_file(out / "plan.json",
                  dump(json{{"config_digest", config_digest}, {"stamp", stamp}, {"plan", to_json(plan)}}));
  std::map<std::string, std::size_t> pool_index;
  for (std::size_t i = 0; i < pool.cases.size(); ++i) pool_index[pool.cases[i].case_id] = i;
  std::map<std::string, double> score;
  for (const auto& r : assessment.reports) score[r.case_id] = r.estimated_dice;
  std::vector<WorklistEntry> worklist;
  for (const auto& id : plan.al_ids) {
    const auto s = score.find(id);
    worklist.push_back({id, ref_from(out, pool.root / pool.cases[pool_index.at(id)].volume_ref),
                        s == score.end() ? std::nan("") : s->second});
  }
  {
    std::ostringstream w;
    write_worklist_csv(w, worklist);
    write_text_file(out / "worklist.csv", w.str());
  }
  outcome.reached = RoundStage::plan;
  outcome.plan = plan;
  if (options.stop_after == RoundStage::plan) return outcome;

  // Manual labels of the AL cases.
  const fs::path labels_dir =
      options.annotator == Annotator::human && options.labels_dir ? *options.labels_dir : out / "labels";
  std::map<std::string, Mask> al_labels;
  if (options.annotator == Annotator::oracle) {
    AnnotationOracle oracle;
    for (const auto& c : pool_cases)
      if (c.truth) oracle.add(c.case_id, *c.truth);
    for (const auto& id : plan.al_ids) {
      if (!oracle.has(id)) throw ValidationError("oracle has no ground truth for AL case " + id);
      Mask m = oracle.annotate(id, spec.oracle);
      write_svol(labels_dir / (id + ".svol.json"), m);
      al_labels.emplace(id, std::move(m));
    }
  } else {
    std::vector<std::string> missing;
    for (const auto& id : plan.al_ids)
      if (!fs::exists(labels_dir / (id + ".svol.json"))) missing.push_back(id);
    if (!missing.empty()) {
      std::string list;
      for (const auto& id : missing) list += (list.empty() ? "" : " ") + id;
      throw PendingAnnotation(std::to_string(missing.size()) + " of " +
                              std::to_string(plan.al_ids.size()) + " worklist labels missing in " +
                              labels_dir.string() + ": " + list);
    }
    for (const auto& id : plan.al_ids) {
      Mask m = read_mask(labels_dir / (id + ".svol.json"));
      require_same_geometry(pool_cases[pool_index.at(id)].volume.geometry(), m.geometry(),
                            "worklist label");
      al_labels.emplace(id, std::move(m));
    }
  }

  RoundData data = assemble_round(base_cases, pool_cases, assessment, plan, al_labels, spec);
  // Refs in the persisted train set are relative to the run directory.
  auto relink = [&](std::vector<CaseRecord>& records, const Corpus& from) {
    std::map<std::string, const CaseRecord*> by_id;
    for (const auto& r : from.cases) by_id[r.case_id] = &r;
    for (auto& r : records) {
      const CaseRecord& src = *by_id.at(r.case_id);
      r.volume_ref = ref_from(out, from.root / src.volume_ref);
      if (&from == &base) {
        r.label_ref = ref_from(out, base.root / *src.label_ref);
        r.domain_tag = src.domain_tag;
      }
    }
  };
  relink(data.trainset.base, base);
  relink(data.trainset.al, pool);
  for (auto& r : data.trainset.al) r.label_ref = ref_from(out, labels_dir / (r.case_id + ".svol.json"));
  relink(data.trainset.st, pool);
  for (auto& r : data.trainset.st) r.label_ref = "assess/" + r.case_id + ".pseudo.svol.json";
  write_text_file(out / "trainset.json", dump(json{{"config_digest", config_digest},
                                                   {"stamp", stamp},
                                                   {"trainset", to_json(data.trainset)}}));
  outcome.trainset = data.trainset;
  if (options.train_externally) return outcome;

  ToyModel student = train_round(model, data.cases, spec);
  write_text_file(out / "model.json", dump(to_json(student)));
  write_text_file(out / "round.json",
                  dump(json{{"config_digest", config_digest},
                            {"stamp", stamp},
                            {"base_model_digest", model_digest(model)},
                            {"model_digest", model_digest(student)},
                            {"n_base", data.trainset.base.size()},
                            {"n_al", data.trainset.al.size()},
                            {"n_st", data.trainset.st.size()},
                            {"threshold_used", plan.threshold_used}}));
  outcome.reached = RoundStage::train;
  outcome.model = std::move(student);
  return outcome;
}

// ---- evaluation and reports ------------------------------------------------

Evaluation evaluate_corpus(const Corpus& test, const Segmenter* seg,
                           const std::optional<fs::path>& predictions_dir, const std::string& arm,
                           const std::string& domain, std::uint64_t seed) {
  if (!seg && !predictions_dir) throw ArgumentError("evaluation needs a segmenter or predictions");
  Evaluation ev;
  for (const auto& r : test.cases) {
    try {
      if (!r.label_ref) throw ValidationError("test case has no label");
      const Mask truth = read_mask(test.root / *r.label_ref);
      Mask pred;
      if (predictions_dir) {
        const fs::path p = *predictions_dir / (r.case_id + ".svol.json");
        if (!fs::exists(p)) throw IoError("no prediction " + p.string());
        pred = read_svol_header(p).kind == GridKind::mask ? read_mask(p) : binarize(read_probmap(p));
      } else {
        const Volume v = read_volume(test.root / r.volume_ref);
        require_same_geometry(v.geometry(), truth.geometry(), "test label");
        pred = binarize(seg->predict_soft(v));
      }
      require_same_geometry(pred.geometry(), truth.geometry(), "prediction");
      const MetricResult m = evaluate_metrics(pred, truth);
      ev.rows.push_back({arm, domain.empty() ? r.domain_tag : domain, seed, r.case_id, m.dice,
                         m.hausdorff95_mm, m.assd2d_mm});
    } catch (const Error& e) {
      ev.failures.push_back({r.case_id, e.what()});
    }
  }
  return ev;
}

std::vector<AggregateRow> write_report_tables(const fs::path& out,
                                              std::span<const CaseMetricsRow> rows,
                                              AggregationMode mode) {
  std::ostringstream per_case, per_seed, agg, cmp;
  write_case_csv(per_case, rows);
  write_seed_csv(per_seed, summarize_seeds(rows));
  const auto aggregate_rows = aggregate(rows, mode);
  write_aggregate_csv(agg, aggregate_rows);
  write_comparison_csv(cmp, aggregate_rows);
  write_text_file(out / "per_case.csv", per_case.str());
  write_text_file(out / "per_seed.csv", per_seed.str());
  write_text_file(out / "aggregate.csv", agg.str());
  write_text_file(out / "comparison.csv", cmp.str());
  return aggregate_rows;
}

void write_study_dir(const fs::path& out, const StudyResult& result) {
  const std::string digest = config_digest(result.config);
  if (fs::exists(out / "config.json")) {
    const json prev = read_json_file(out / "config.json");
    if (prev.value("digest", "") != digest) {
      throw ConflictError("directory " + out.string() + " holds a study with another config digest");
    }
  }
  write_text_file(out / "config.json", dump(json{{"digest", digest}, {"config", to_json(result.config)}}));
  write_text_file(out / "ensemble.json", dump(to_json(result.ensemble)));
  json arms = json::array();
  for (const auto& a : result.arms) arms.push_back(to_json(a));
  write_text_file(out / "arms.json", dump(json{{"config_digest", digest}, {"arms", arms}}));
  write_report_tables(out, result.rows, result.config.aggregation);
}

std::vector<AggregateRow> rebuild_report(const fs::path& dir, std::optional<AggregationMode> mode) {
  if (!mode) {
    mode = AggregationMode::run_level;
    for (const char* name : {"config.json", "evaluation.json"}) {
      if (!fs::exists(dir / name)) continue;
      const json j = read_json_file(dir / name);
      const json& c = j.contains("config") ? j.at("config") : j;
      if (c.contains("aggregation")) {
        mode = parse_aggregation_mode(c.at("aggregation").get<std::string>());
        break;
      }
    }
  }
  std::istringstream in(read_text_file(dir / "per_case.csv"));
  const auto rows = read_case_csv(in);
  std::ostringstream per_seed, agg, cmp;
  write_seed_csv(per_seed, summarize_seeds(rows));
  const auto aggregate_rows = aggregate(rows, *mode);
  write_aggregate_csv(agg, aggregate_rows);
  write_comparison_csv(cmp, aggregate_rows);
  write_text_file(dir / "per_seed.csv", per_seed.str());
  write_text_file(dir / "aggregate.csv", agg.str());
  write_text_file(dir / "comparison.csv", cmp.str());
  return aggregate_rows;
}

}  // namespace ttaloop
