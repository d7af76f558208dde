#include "ttaloop/study.hpp"

#include <cstdio>

#include "ttaloop/metrics.hpp"
#include "ttaloop/rng.hpp"

namespace ttaloop {

using nlohmann::json;

const char* to_string(StudyId s) {
  switch (s) {
    case StudyId::st_only: return "st-only";
    case StudyId::transfer_al_st: return "transfer-al-st";
    case StudyId::highvar: return "highvar";
  }
  return "?";
}

StudyId parse_study_id(const std::string& s) {
  if (s == "st-only") return StudyId::st_only;
  if (s == "transfer-al-st") return StudyId::transfer_al_st;
  if (s == "highvar") return StudyId::highvar;
  throw ValidationError("unknown study '" + s + "' (st-only, transfer-al-st, highvar)");
}

void StudyConfig::validate() const {
  if (seeds.empty()) throw ValidationError("study needs at least one seed");
  for (std::size_t i = 0; i < seeds.size(); ++i)
    for (std::size_t j = i + 1; j < seeds.size(); ++j)
      if (seeds[i] == seeds[j]) throw ValidationError("study seeds must be distinct");
  phantom.validate();
  if (n_base < 1) throw ValidationError("n_base must be >= 1");
  if (n_pool < 1) throw ValidationError("n_pool must be >= 1");
  if (n_test < 1 || n_ood_test < 0) throw ValidationError("test set sizes must be positive");
  if (ensemble_size < 1) throw ValidationError("ensemble size must be >= 1");
  if (k < 0 || k > n_pool || k_borders < 0 || k_borders > n_pool) {
    throw ValidationError("AL budget must lie in [0, n_pool]");
  }
  if (floor && (*floor < 0.0 || *floor > 1.0)) throw ValidationError("floor must lie in [0, 1]");
  if (!(ood_magnitude >= 0.0 && ood_magnitude < 1.0) ||
      !(target_magnitude >= 0.0 && target_magnitude < 1.0)) {
    throw ValidationError("shift magnitudes must lie in [0, 1)");
  }
  if (study == StudyId::transfer_al_st && n_target_train < 1) {
    throw ValidationError("n_target_train must be >= 1");
  }
  tta.validate();
  teacher_schedule.validate();
  round_schedule.validate();
  if (train.samples_per_class < 1 || train.batch_size < 1) {
    throw ValidationError("samples_per_class and batch_size must be >= 1");
  }
  if (oracle_jitter < 0) throw ValidationError("oracle jitter must be >= 0");
}

StudyConfig default_study_config(StudyId id) {
  StudyConfig c;
  c.study = id;
  switch (id) {
    case StudyId::st_only:
      c.aggregation = AggregationMode::per_case;
      break;
    case StudyId::transfer_al_st:
      c.n_pool = 24;
      c.k = 3;
      c.k_borders = 2;
      c.n_ood_test = 0;
      break;
    case StudyId::highvar:
      c.phantom.variability = Variability::high;
      c.n_base = 10;
      c.n_pool = 40;
      c.k = 5;
      c.ood_shift = ShiftKind::crop_fov;
      c.ood_magnitude = 0.4;
      break;
  }
  return c;
}

json to_json(const StudyConfig& c) {
  json seeds = json::array();
  for (auto s : c.seeds) seeds.push_back(s);
  return json{
      {"study", to_string(c.study)},
      {"seeds", seeds},
      {"phantom", to_json(c.phantom)},
      {"n_base", c.n_base},
      {"n_pool", c.n_pool},
      {"n_test", c.n_test},
      {"n_ood_test", c.n_ood_test},
      {"ood_shift", to_string(c.ood_shift)},
      {"ood_magnitude", c.ood_magnitude},
      {"target_magnitude", c.target_magnitude},
      {"n_target_train", c.n_target_train},
      {"ensemble_size", c.ensemble_size},
      {"ensemble_seed", c.ensemble_seed},
      {"tta", to_json(c.tta)},
      {"aggregator", to_string(c.aggregator)},
      {"include_identity", c.include_identity},
      {"pseudo_label_mode", to_string(c.pseudo_mode)},
      {"floor", c.floor ? json(*c.floor) : json(nullptr)},
      {"k", c.k},
      {"k_borders", c.k_borders},
      {"borders_in_combined_arm", c.borders_in_combined_arm},
      {"teacher_schedule", to_json(c.teacher_schedule)},
      {"round_schedule", to_json(c.round_schedule)},
      {"train",
       {{"samples_per_class", c.train.samples_per_class},
        {"batch_size", c.train.batch_size}}},
      {"oracle_jitter", c.oracle_jitter},
      {"aggregation", to_string(c.aggregation)},
  };
}

StudyConfig study_config_from_json(const json& j) {
  try {
    StudyConfig c = default_study_config(parse_study_id(j.at("study").get<std::string>()));
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("phantom")) c.phantom = phantom_spec_from_json(j.at("phantom"));
    get("n_base", c.n_base);
    get("n_pool", c.n_pool);
    get("n_test", c.n_test);
    get("n_ood_test", c.n_ood_test);
    if (j.contains("ood_shift")) c.ood_shift = parse_shift(j.at("ood_shift").get<std::string>());
    get("ood_magnitude", c.ood_magnitude);
    get("target_magnitude", c.target_magnitude);
    get("n_target_train", c.n_target_train);
    get("ensemble_size", c.ensemble_size);
    get("ensemble_seed", c.ensemble_seed);
    if (j.contains("tta")) c.tta = tta_config_from_json(j.at("tta"));
    if (j.contains("aggregator")) c.aggregator = parse_aggregator(j.at("aggregator").get<std::string>());
    get("include_identity", c.include_identity);
    if (j.contains("pseudo_label_mode")) {
      c.pseudo_mode = parse_pseudo_label_mode(j.at("pseudo_label_mode").get<std::string>());
    }
    if (j.contains("floor")) {
      c.floor = j.at("floor").is_null() ? std::nullopt : std::optional<double>(j.at("floor").get<double>());
    }
    get("k", c.k);
    get("k_borders", c.k_borders);
    get("borders_in_combined_arm", c.borders_in_combined_arm);
    if (j.contains("teacher_schedule")) c.teacher_schedule = schedule_from_json(j.at("teacher_schedule"));
    if (j.contains("round_schedule")) c.round_schedule = schedule_from_json(j.at("round_schedule"));
    if (j.contains("train")) {
      c.train.samples_per_class = j.at("train").value("samples_per_class", c.train.samples_per_class);
      c.train.batch_size = j.at("train").value("batch_size", c.train.batch_size);
    }
    get("oracle_jitter", c.oracle_jitter);
    if (j.contains("aggregation")) c.aggregation = parse_aggregation_mode(j.at("aggregation").get<std::string>());
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad study config: ") + e.what());
  }
}

std::string config_digest(const StudyConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

std::vector<std::string> study_arms(StudyId id) {
  switch (id) {
    case StudyId::st_only:
      return {"baseline", "FT", "ST", "big-baseline", "big-FT"};
    case StudyId::transfer_al_st:
      return {"random", "AL", "AL+ST", "AL+ST+borders", "no-ST-step", "target-baseline"};
    case StudyId::highvar:
      return {"baseline", "ST", "random", "AL", "AL+ST", "big-baseline"};
  }
  return {};
}

std::vector<CaseMetricsRow> evaluate_model(const ToyModel& model, std::span<const LoadedCase> cases,
                                           const std::string& arm, const std::string& domain,
                                           std::uint64_t seed) {
  std::vector<CaseMetricsRow> rows;
  for (const auto& c : cases) {
    if (!c.truth) throw ValidationError("test case " + c.case_id + " has no ground truth");
    const MetricResult m = evaluate_metrics(binarize(predict_soft(model, c.volume)), *c.truth);
    rows.push_back({arm, domain, seed, c.case_id, m.dice, m.hausdorff95_mm, m.assd2d_mm});
  }
  return rows;
}

json to_json(const ArmRecord& a) {
  return json{{"seed", a.seed},
              {"arm", a.arm},
              {"model_digest", a.model_digest},
              {"plan", a.plan ? to_json(*a.plan) : json(nullptr)},
              {"trainset", a.trainset ? to_json(*a.trainset) : json(nullptr)}};
}

namespace {

std::vector<LoadedCase> make_cases(PhantomSpec spec, ShiftKind shift, double magnitude,
                                   const std::string& prefix, int n, const std::string& domain,
                                   std::uint64_t seed) {
  spec.shift = magnitude > 0.0 ? shift : ShiftKind::none;
  spec.shift_magnitude = spec.shift == ShiftKind::none ? 0.0 : magnitude;
  std::vector<LoadedCase> out;
  for (int i = 0; i < n; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "s%llu-%s-%03d", static_cast<unsigned long long>(seed),
                  prefix.c_str(), i);
    Phantom p = gen_phantom(spec, mix_seed(seed, id));
    out.push_back({id, domain, std::move(p.volume), std::move(p.truth), p.border});
  }
  return out;
}

std::vector<TrainingCase> labeled(std::span<const LoadedCase> cases) {
  std::vector<TrainingCase> out;
  for (const auto& c : cases) out.push_back(labeled_training_case(c));
  return out;
}

std::vector<LoadedCase> concat(const std::vector<LoadedCase>& a, const std::vector<LoadedCase>& b) {
  std::vector<LoadedCase> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

class SeedRun {
 public:
  SeedRun(const StudyConfig& c, const TtaEnsemble& e, std::uint64_t seed, StudyResult& out)
      : c_(c), e_(e), seed_(seed), out_(out) {}

  void run() {
    switch (c_.study) {
      case StudyId::st_only: st_only(); break;
      case StudyId::transfer_al_st: transfer(); break;
      case StudyId::highvar: highvar(); break;
    }
  }

 private:
  ToyModel teacher(std::span<const TrainingCase> cases, const char* salt) {
    return train(cases, c_.teacher_schedule, c_.train, mix_seed(seed_, salt)).model;
  }

  ToyModel fine(const ToyModel& base, std::span<const TrainingCase> cases, const char* salt) {
    return fine_tune(base, cases, c_.round_schedule, c_.train, mix_seed(seed_, salt)).model;
  }

  PoolAssessment assess(const ToyModel& m, std::span<const LoadedCase> pool, bool borders) {
    AssessOptions o;
    o.quality.aggregator = c_.aggregator;
    o.quality.include_identity = c_.include_identity;
    o.pseudo_mode = c_.pseudo_mode;
    o.borders = borders;
    return assess_pool(ToySegmenter(m), pool, e_, o);
  }

  RoundResult round(const ToyModel& base_model, std::span<const TrainingCase> base,
                    std::span<const LoadedCase> pool, const PoolAssessment& a,
                    const AnnotationOracle& oracle, int k, bool st, bool random, bool borders,
                    const std::string& arm) {
    RoundSpec spec;
    spec.k = static_cast<std::size_t>(k);
    spec.self_training = st;
    spec.random_selection = random;
    spec.borders = borders;
    spec.floor = c_.floor;
    spec.oracle = {c_.oracle_jitter, mix_seed(seed_, "oracle")};
    spec.schedule = c_.round_schedule;
    spec.train = c_.train;
    spec.seed = mix_seed(seed_, arm);
    return run_round(base_model, base, pool, a, oracle, spec);
  }

  void record(const std::string& arm, const ToyModel& m, std::optional<RoundResult> r = {}) {
    ArmRecord a;
    a.seed = seed_;
    a.arm = arm;
    a.model_digest = model_digest(m);
    if (r) {
      a.plan = r->plan;
      a.trainset = r->trainset;
    }
    out_.arms.push_back(std::move(a));
  }

  void evaluate(const std::string& arm, const ToyModel& m) {
    for (const auto& [domain, cases] : tests_) {
      auto rows = evaluate_model(m, *cases, arm, domain, seed_);
      out_.rows.insert(out_.rows.end(), rows.begin(), rows.end());
    }
  }

  void arm(const std::string& name, const ToyModel& m, std::optional<RoundResult> r = {}) {
    record(name, m, std::move(r));
    evaluate(name, m);
  }

  static AnnotationOracle oracle_for(std::span<const LoadedCase> pool) {
    AnnotationOracle o;
    for (const auto& c : pool) o.add(c.case_id, *c.truth);
    return o;
  }

  void st_only() {
    const auto base = make_cases(c_.phantom, ShiftKind::none, 0, "base", c_.n_base, "source", seed_);
    const auto pool = make_cases(c_.phantom, ShiftKind::none, 0, "pool", c_.n_pool, "source", seed_);
    const auto test = make_cases(c_.phantom, ShiftKind::none, 0, "test", c_.n_test, "source", seed_);
    const auto ood = make_cases(c_.phantom, c_.ood_shift, c_.ood_magnitude, "ood", c_.n_ood_test, "ood", seed_);
    tests_ = {{"id", &test}, {"ood", &ood}};
    const auto base_tc = labeled(base);
    const auto oracle = oracle_for(pool);

    const ToyModel t = teacher(base_tc, "teacher");
    arm("baseline", t);
    arm("FT", fine(t, base_tc, "FT"));
    const auto a = assess(t, pool, false);
    auto st = round(t, base_tc, pool, a, oracle, 0, true, false, false, "ST");
    arm("ST", st.model, st);
    const auto all_tc = labeled(concat(base, pool));
    const ToyModel big = teacher(all_tc, "big-teacher");
    arm("big-baseline", big);
    arm("big-FT", fine(big, all_tc, "big-FT"));
  }

  void transfer() {
    const auto base = make_cases(c_.phantom, ShiftKind::none, 0, "base", c_.n_base, "source", seed_);
    const auto src_pool = make_cases(c_.phantom, ShiftKind::none, 0, "srcpool", c_.n_pool, "source", seed_);
    const auto pool = make_cases(c_.phantom, ShiftKind::contrast_shift, c_.target_magnitude, "pool",
                                 c_.n_pool, "target", seed_);
    const auto test = make_cases(c_.phantom, ShiftKind::contrast_shift, c_.target_magnitude, "test",
                                 c_.n_test, "target", seed_);
    tests_ = {{"target", &test}};
    const auto base_tc = labeled(base);
    const auto src_oracle = oracle_for(src_pool);
    const auto oracle = oracle_for(pool);

    const ToyModel t = teacher(base_tc, "teacher");
    const auto st_step =
        round(t, base_tc, src_pool, assess(t, src_pool, false), src_oracle, 0, true, false, false, "ST-step");
    const ToyModel& s = st_step.model;
    record("ST-step", s, st_step);

    auto r1 = round(s, base_tc, pool, {}, oracle, c_.k, false, true, false, "random");
    arm("random", r1.model, r1);
    const auto a = assess(s, pool, false);
    auto r2 = round(s, base_tc, pool, a, oracle, c_.k, false, false, false, "AL");
    arm("AL", r2.model, r2);
    auto r3 = round(s, base_tc, pool, a, oracle, c_.k, true, false, false, "AL+ST");
    arm("AL+ST", r3.model, r3);
    const auto ab = assess(s, pool, true);
    auto r4 = round(s, base_tc, pool, ab, oracle, c_.k_borders, true, false, true, "AL+ST+borders");
    arm("AL+ST+borders", r4.model, r4);
    const auto at = assess(t, pool, true);
    auto r5 = round(t, base_tc, pool, at, oracle, c_.k, true, false, true, "no-ST-step");
    arm("no-ST-step", r5.model, r5);
    const auto target_train = make_cases(c_.phantom, ShiftKind::contrast_shift, c_.target_magnitude,
                                         "target", c_.n_target_train, "target", seed_);
    arm("target-baseline", teacher(labeled(target_train), "target-teacher"));
  }

  void highvar() {
    const auto base = make_cases(c_.phantom, ShiftKind::none, 0, "base", c_.n_base, "source", seed_);
    const auto pool = make_cases(c_.phantom, ShiftKind::none, 0, "pool", c_.n_pool, "source", seed_);
    const auto test = make_cases(c_.phantom, ShiftKind::none, 0, "test", c_.n_test, "source", seed_);
    const auto ood = make_cases(c_.phantom, c_.ood_shift, c_.ood_magnitude, "ood", c_.n_ood_test, "ood", seed_);
    tests_ = {{"id", &test}, {"ood", &ood}};
    const auto base_tc = labeled(base);
    const auto oracle = oracle_for(pool);

    const ToyModel t = teacher(base_tc, "teacher");
    arm("baseline", t);
    const auto a = assess(t, pool, false);
    auto st = round(t, base_tc, pool, a, oracle, 0, true, false, false, "ST");
    arm("ST", st.model, st);
    auto rnd = round(t, base_tc, pool, {}, oracle, c_.k, false, true, false, "random");
    arm("random", rnd.model, rnd);
    auto al = round(t, base_tc, pool, a, oracle, c_.k, false, false, false, "AL");
    arm("AL", al.model, al);
    const bool b = c_.borders_in_combined_arm;
    const auto ab = b ? assess(t, pool, true) : PoolAssessment{};
    auto alst = round(t, base_tc, pool, b ? ab : a, oracle, c_.k, true, false, b, "AL+ST");
    arm("AL+ST", alst.model, alst);
    arm("big-baseline", teacher(labeled(concat(base, pool)), "big-teacher"));
  }

  const StudyConfig& c_;
  const TtaEnsemble& e_;
  std::uint64_t seed_;
  StudyResult& out_;
  std::vector<std::pair<std::string, const std::vector<LoadedCase>*>> tests_;
};

}  // namespace

StudyResult run_study(const StudyConfig& config) {
  config.validate();
  StudyResult out;
  out.config = config;
  out.ensemble = enumerate_transforms(config.ensemble_size, config.ensemble_seed, config.tta);
  for (auto seed : config.seeds) SeedRun(config, out.ensemble, seed, out).run();
  return out;
}

}  // namespace ttaloop
