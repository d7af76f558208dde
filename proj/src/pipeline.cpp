#include "ttaloop/pipeline.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "ttaloop/rng.hpp"

namespace ttaloop {

TrainingCase labeled_training_case(const std::string& case_id, const Volume& v, const Mask& label) {
  require_same_geometry(v.geometry(), label.geometry(), "labeled case");
  ProbMap target(label.geometry());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = label[i];
  return TrainingCase{case_id, v, std::move(target)};
}

TrainingCase labeled_training_case(const LoadedCase& c) {
  if (!c.truth) throw ValidationError("case " + c.case_id + " has no label");
  return labeled_training_case(c.case_id, c.volume, *c.truth);
}

PoolAssessment assess_case(const Segmenter& seg, const LoadedCase& c, const TtaEnsemble& e,
                           const AssessOptions& options, PoolAssessment into) {
  const auto preds = tta_infer(seg, c.volume, e);
  const SoftMedian median = median_vote(preds);
  QualityOptions q = options.quality;
  std::optional<SliceRange> border;
  if (options.borders) {
    if (!c.border) throw ValidationError("case " + c.case_id + " has no border annotation");
    border = c.border;
    q.roi = border;
  }
  into.reports.push_back(estimate_quality(c.case_id, preds, median, q));
  into.candidates.push_back(build_pseudo_label(options.pseudo_mode, preds, median, border));
  return into;
}

PoolAssessment assess_pool(const Segmenter& seg, std::span<const LoadedCase> pool,
                           const TtaEnsemble& e, const AssessOptions& options) {
  PoolAssessment out;
  for (const auto& c : pool) out = assess_case(seg, c, e, options, std::move(out));
  return out;
}

std::vector<std::string> random_selection(std::span<const LoadedCase> pool, std::size_t k,
                                          std::uint64_t seed) {
  if (k > pool.size()) throw ArgumentError("cannot pick more random cases than the pool holds");
  std::vector<std::size_t> idx(pool.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(mix_seed(seed, "random-selection"));
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> ids;
  for (auto i : idx) ids.push_back(pool[i].case_id);
  return ids;
}

SelectionPlan plan_round(std::size_t n_base, std::span<const LoadedCase> pool,
                         const PoolAssessment& assessment, const RoundSpec& spec) {
  if (pool.empty() && (spec.k > 0 || spec.self_training)) {
    throw ValidationError("round needs a non-empty unlabeled pool");
  }
  const bool needs_quality = spec.self_training || (spec.k > 0 && !spec.random_selection);
  if (needs_quality && assessment.reports.size() != pool.size()) {
    throw ArgumentError("pool assessment does not cover the pool");
  }
  const std::size_t n_labeled = n_base + spec.k;

  SelectionPlan plan;
  if (!needs_quality) {
    plan.k_requested = spec.k;
    plan.n_labeled = n_labeled;
    plan.floor = spec.floor;
    plan.threshold_used = 1.0;
    plan.al_ids = random_selection(pool, spec.k, spec.seed);
    const std::set<std::string> al(plan.al_ids.begin(), plan.al_ids.end());
    for (const auto& c : pool)
      if (!al.count(c.case_id)) plan.excluded_ids.push_back(c.case_id);
  } else if (spec.random_selection) {
    plan.k_requested = spec.k;
    plan.n_labeled = n_labeled;
    plan.floor = spec.floor;
    plan.al_ids = random_selection(pool, spec.k, spec.seed);
    plan.threshold_used = auto_threshold(assessment.reports, n_labeled, spec.floor);
    plan.st_ids = select_st(assessment.reports, plan.al_ids, plan.threshold_used);
    std::set<std::string> taken(plan.al_ids.begin(), plan.al_ids.end());
    taken.insert(plan.st_ids.begin(), plan.st_ids.end());
    for (const auto& r : assessment.reports)
      if (!taken.count(r.case_id)) plan.excluded_ids.push_back(r.case_id);
    plan.count_guarantee_met = plan.st_ids.size() >= std::min(n_labeled, pool.size() - spec.k);
  } else {
    plan = plan_selection(assessment.reports, spec.k, n_labeled, spec.floor);
    check_plan(plan, assessment.reports);
  }
  if (!spec.self_training) {
    plan.excluded_ids.insert(plan.excluded_ids.end(), plan.st_ids.begin(), plan.st_ids.end());
    plan.st_ids.clear();
    std::map<std::string, std::size_t> order;
    for (std::size_t i = 0; i < pool.size(); ++i) order[pool[i].case_id] = i;
    std::sort(plan.excluded_ids.begin(), plan.excluded_ids.end(),
              [&](const std::string& a, const std::string& b) { return order[a] < order[b]; });
  }
  return plan;
}

RoundData assemble_round(std::span<const TrainingCase> base, std::span<const LoadedCase> pool,
                         const PoolAssessment& assessment, const SelectionPlan& plan,
                         const std::map<std::string, Mask>& al_labels, const RoundSpec& spec) {
  std::map<std::string, const LoadedCase*> by_id;
  for (const auto& c : pool) by_id[c.case_id] = &c;
  std::map<std::string, std::size_t> candidate_of;
  for (std::size_t i = 0; i < assessment.reports.size(); ++i) {
    candidate_of[assessment.reports[i].case_id] = i;
  }
  auto pool_case = [&](const std::string& id) -> const LoadedCase& {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("plan names case " + id + " outside the pool");
    return *it->second;
  };
  auto border_of = [&](const LoadedCase& c) {
    return spec.borders ? c.border : std::optional<SliceRange>{};
  };

  RoundData out;
  out.cases.assign(base.begin(), base.end());
  std::vector<CaseRecord> base_records, al_records, st_records;
  for (const auto& b : base) {
    base_records.push_back({b.case_id, "memory:" + b.case_id, "memory:" + b.case_id + ":label",
                            LabelKind::manual_hard, std::nullopt, "base"});
  }
  for (const auto& id : plan.al_ids) {
    const LoadedCase& c = pool_case(id);
    const auto label = al_labels.find(id);
    if (label == al_labels.end()) throw ValidationError("no manual label for AL case " + id);
    out.cases.push_back(labeled_training_case(id, c.volume, label->second));
    al_records.push_back({id, "memory:" + id, "memory:" + id + ":manual", LabelKind::manual_hard,
                          border_of(c), c.domain_tag});
  }
  for (const auto& id : plan.st_ids) {
    const LoadedCase& c = pool_case(id);
    const auto cand = candidate_of.find(id);
    if (cand == candidate_of.end()) throw ValidationError("no pseudo-label for ST case " + id);
    out.cases.push_back(TrainingCase{id, c.volume, assessment.candidates.at(cand->second)});
    st_records.push_back({id, "memory:" + id, "memory:" + id + ":pseudo", LabelKind::pseudo_soft,
                          border_of(c), c.domain_tag});
  }
  out.trainset =
      assemble_trainset(std::move(base_records), std::move(al_records), std::move(st_records));
  return out;
}

ToyModel train_round(const ToyModel& base_model, std::span<const TrainingCase> cases,
                     const RoundSpec& spec) {
  return fine_tune(base_model, cases, spec.schedule, spec.train, mix_seed(spec.seed, "round")).model;
}

RoundResult run_round(const ToyModel& base_model, std::span<const TrainingCase> base,
                      std::span<const LoadedCase> pool, const PoolAssessment& assessment,
                      const AnnotationOracle& oracle, const RoundSpec& spec) {
  SelectionPlan plan = plan_round(base.size(), pool, assessment, spec);
  std::map<std::string, Mask> labels;
  for (const auto& id : plan.al_ids) labels.emplace(id, oracle.annotate(id, spec.oracle));
  RoundData data = assemble_round(base, pool, assessment, plan, labels, spec);
  RoundResult out;
  out.model = train_round(base_model, data.cases, spec);
  out.trainset = std::move(data.trainset);
  out.plan = std::move(plan);
  return out;
}

}  // namespace ttaloop
