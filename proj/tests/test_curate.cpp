#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "ttaloop/curate.hpp"
#include "ttaloop/quality.hpp"

using namespace ttaloop;

namespace {

QualityReport report(const std::string& id, double d) {
  QualityReport r;
  r.case_id = id;
  r.estimated_dice = d;
  r.per_aug_dice = {d};
  r.ensemble_size = 1;
  return r;
}

std::vector<QualityReport> reports(std::initializer_list<double> scores) {
  std::vector<QualityReport> out;
  int i = 0;
  for (double s : scores) out.push_back(report("c" + std::to_string(i++), s));
  return out;
}

ProbMap filled(const Geometry& g, float v) { return ProbMap(g, v); }

const Geometry kG{{3, 2, 2}, {1, 1, 1}};

}  // namespace

TEST(MedianVote, OddAndEvenCounts) {
  const std::vector<ProbMap> odd{filled(kG, 0.2f), filled(kG, 0.9f), filled(kG, 0.4f)};
  const SoftMedian m = median_vote(odd);
  EXPECT_FLOAT_EQ(m.prob[0], 0.4f);
  EXPECT_EQ(m.mask[0], 0);
  const std::vector<ProbMap> even{filled(kG, 0.2f), filled(kG, 0.4f), filled(kG, 0.6f),
                                  filled(kG, 0.9f)};
  EXPECT_FLOAT_EQ(median_vote(even).prob[0], 0.5f);
  EXPECT_EQ(median_vote(even).mask[0], 1);
}

TEST(EstimateQuality, AgreeingMembersScoreOne) {
  std::vector<ProbMap> preds(4, filled(kG, 0.8f));
  const SoftMedian m = median_vote(preds);
  const QualityReport r = estimate_quality("a", preds, m);
  EXPECT_EQ(r.estimated_dice, 1.0);
  EXPECT_EQ(r.per_aug_dice.size(), 4u);
  EXPECT_EQ(r.ensemble_size, 4);
}

TEST(EstimateQuality, IdentityExclusionAndAggregators) {
  // Member 0 disagrees completely with the median of the other three.
  std::vector<ProbMap> preds{filled(kG, 0.1f), filled(kG, 0.9f), filled(kG, 0.9f), filled(kG, 0.9f)};
  const SoftMedian m = median_vote(preds);
  const QualityReport all = estimate_quality("a", preds, m);
  EXPECT_EQ(all.per_aug_dice.front(), 0.0);
  EXPECT_DOUBLE_EQ(all.estimated_dice, 0.75);
  QualityOptions o;
  o.include_identity = false;
  EXPECT_EQ(estimate_quality("a", preds, m, o).estimated_dice, 1.0);
  o.include_identity = true;
  o.aggregator = Aggregator::median;
  EXPECT_EQ(estimate_quality("a", preds, m, o).estimated_dice, 1.0);
}

TEST(EstimateQuality, RoiLimitsTheComparedSlices) {
  ProbMap off = filled(kG, 0.9f);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) off.at(2, y, x) = 0.0f;  // disagree only in slice 2
  std::vector<ProbMap> preds{filled(kG, 0.9f), off, filled(kG, 0.9f)};
  const SoftMedian m = median_vote(preds);
  EXPECT_LT(estimate_quality("a", preds, m).estimated_dice, 1.0);
  QualityOptions o;
  o.roi = SliceRange{0, 1};
  const QualityReport r = estimate_quality("a", preds, m, o);
  EXPECT_EQ(r.estimated_dice, 1.0);
  EXPECT_EQ(r.roi, o.roi);
  o.roi = SliceRange{1, 3};
  EXPECT_THROW(estimate_quality("a", preds, m, o), ArgumentError);
}

TEST(RankByQuality, AscendingWithIdTieBreak) {
  const std::vector<QualityReport> r{report("b", 0.5), report("a", 0.5), report("c", 0.1)};
  EXPECT_EQ(rank_by_quality(r), (std::vector<std::string>{"c", "a", "b"}));
}

TEST(QualityCsv, RoundTrip) {
  std::vector<QualityReport> r{report("x", 0.123456789012345), report("y", 1.0)};
  r[1].roi = SliceRange{2, 5};
  r[1].per_aug_dice = {1.0, 0.5, 0.25};
  r[1].ensemble_size = 3;
  r[1].aggregator = Aggregator::median;
  std::stringstream s;
  write_quality_csv(s, r);
  EXPECT_EQ(read_quality_csv(s), r);
}

TEST(AutoThreshold, IsTheNLabeledLargestScore) {
  const auto r = reports({0.9, 0.5, 0.7, 0.95, 0.6});
  EXPECT_EQ(auto_threshold(r, 1), 0.95);
  EXPECT_EQ(auto_threshold(r, 3), 0.7);
  EXPECT_EQ(auto_threshold(r, 10), 0.5);  // pool smaller than n_labeled
  EXPECT_EQ(auto_threshold(r, 3, 0.8), 0.8);
  EXPECT_EQ(auto_threshold(r, 3, 0.1), 0.7);
  EXPECT_THROW(auto_threshold(r, 0), ArgumentError);
  EXPECT_THROW(auto_threshold(std::vector<QualityReport>{}, 1), ArgumentError);
}

TEST(PlanSelection, WorstGoToAnnotationBestToPseudoLabels) {
  const auto r = reports({0.9, 0.5, 0.7, 0.95, 0.6, 0.8});
  const SelectionPlan p = plan_selection(r, 2, 3);
  EXPECT_EQ(p.al_ids, (std::vector<std::string>{"c1", "c4"}));
  EXPECT_EQ(p.threshold_used, 0.8);
  EXPECT_EQ(p.st_ids, (std::vector<std::string>{"c0", "c3", "c5"}));
  EXPECT_EQ(p.excluded_ids, (std::vector<std::string>{"c2"}));
  EXPECT_TRUE(p.count_guarantee_met);
  EXPECT_NO_THROW(check_plan(p, r));
}

TEST(PlanSelection, FloorCanBreakTheCountGuarantee) {
  const auto r = reports({0.9, 0.5, 0.7, 0.95});
  const SelectionPlan p = plan_selection(r, 0, 3, 0.92);
  EXPECT_EQ(p.st_ids, (std::vector<std::string>{"c3"}));
  EXPECT_FALSE(p.count_guarantee_met);
}

TEST(PlanSelection, CheckRejectsBrokenPlans) {
  const auto r = reports({0.9, 0.5, 0.7});
  SelectionPlan p = plan_selection(r, 1, 1);
  SelectionPlan dup = p;
  dup.st_ids.push_back(dup.al_ids.front());
  EXPECT_THROW(check_plan(dup, r), ValidationError);
  SelectionPlan missing = p;
  missing.excluded_ids.clear();
  EXPECT_THROW(check_plan(missing, r), ValidationError);
  SelectionPlan wrong_al = p;
  std::swap(wrong_al.al_ids.front(), wrong_al.st_ids.front());
  EXPECT_THROW(check_plan(wrong_al, r), ValidationError);
}

TEST(PlanSelection, RandomizedInvariants) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 30);
    std::vector<QualityReport> r;
    for (int i = 0; i < n; ++i) {
      // Coarse scores force plenty of ties.
      r.push_back(report("id" + std::to_string(rng() % 1000) + "-" + std::to_string(i),
                         static_cast<double>(rng() % 11) / 10.0));
    }
    const std::size_t k = rng() % static_cast<std::size_t>(n + 1);
    const std::size_t n_labeled = 1 + rng() % 12;
    const SelectionPlan p = plan_selection(r, k, n_labeled);
    EXPECT_NO_THROW(check_plan(p, r));
    EXPECT_EQ(p.st_ids.size() + p.al_ids.size() + p.excluded_ids.size(), static_cast<std::size_t>(n));
    EXPECT_GE(p.st_ids.size(), std::min<std::size_t>(n_labeled, n - k));
    std::vector<QualityReport> shuffled = r;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(plan_selection(shuffled, k, n_labeled), p);
  }
}

TEST(BorderCorrection, ZeroesOutsideTheRange) {
  const ProbMap p = filled(kG, 0.7f);
  const ProbMap c = apply_border_correction(p, SliceRange{1, 1});
  EXPECT_EQ(c.at(0, 0, 0), 0.0f);
  EXPECT_EQ(c.at(1, 1, 1), 0.7f);
  EXPECT_EQ(c.at(2, 0, 1), 0.0f);
}

TEST(PseudoLabel, ModesAndBorders) {
  std::vector<ProbMap> preds{filled(kG, 0.2f), filled(kG, 0.9f), filled(kG, 0.8f)};
  const SoftMedian m = median_vote(preds);
  EXPECT_EQ(build_pseudo_label(PseudoLabelMode::plain_soft, preds, m, std::nullopt), preds[0]);
  EXPECT_EQ(build_pseudo_label(PseudoLabelMode::tta_median_soft, preds, m, std::nullopt), m.prob);
  const ProbMap bordered =
      build_pseudo_label(PseudoLabelMode::tta_median_soft, preds, m, SliceRange{0, 1});
  EXPECT_EQ(bordered.at(2, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(bordered.at(0, 0, 0), 0.8f);
  EXPECT_EQ(parse_pseudo_label_mode(to_string(PseudoLabelMode::plain_soft)), PseudoLabelMode::plain_soft);
}

TEST(TrainSet, RejectsDuplicateIdsAndWrongKinds) {
  const CaseRecord base{"a", "a.svol.json", "a.lab.svol.json", LabelKind::manual_hard, std::nullopt, "s"};
  const CaseRecord st{"b", "b.svol.json", "b.p.svol.json", LabelKind::pseudo_soft, std::nullopt, "s"};
  const TrainSet t = assemble_trainset({base}, {}, {st});
  EXPECT_EQ(t.size(), 2u);
  EXPECT_THROW(assemble_trainset({base}, {base}, {}), ConflictError);
  const CaseRecord bare{"c", "c.svol.json", std::nullopt, LabelKind::none, std::nullopt, "s"};
  EXPECT_THROW(assemble_trainset({bare}, {}, {}), ValidationError);
  EXPECT_THROW(assemble_trainset({base}, {st}, {}), ValidationError);
  EXPECT_THROW(assemble_trainset({base}, {}, {base}), ConflictError);
}

TEST(CaseRecord, LabelKindMustMatchLabelPresence) {
  CaseRecord c{"a", "a.svol.json", std::nullopt, LabelKind::manual_hard, std::nullopt, ""};
  EXPECT_THROW(validate(c), ValidationError);
  c.label_kind = LabelKind::none;
  EXPECT_NO_THROW(validate(c));
  c.border = SliceRange{3, 2};
  EXPECT_THROW(validate(c), ValidationError);
}

TEST(Serialisation, PlanTrainSetAndWorklistRoundTrip) {
  const auto r = reports({0.9, 0.5, 0.7, 0.95});
  const SelectionPlan p = plan_selection(r, 1, 2, 0.6);
  EXPECT_EQ(plan_from_json(to_json(p)), p);
  const CaseRecord c{"a", "v/a.svol.json", "l/a.svol.json", LabelKind::manual_hard, SliceRange{1, 4}, "t"};
  EXPECT_EQ(case_record_from_json(to_json(c)), c);
  const std::vector<WorklistEntry> w{{"a", "v/a.svol.json", 0.8125}, {"b", "v/b.svol.json", 0.5}};
  std::stringstream s;
  write_worklist_csv(s, w);
  const auto back = read_worklist_csv(s);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].case_id, "a");
  EXPECT_EQ(back[1].volume_ref, "v/b.svol.json");
  EXPECT_EQ(back[0].estimated_dice, 0.8125);
}
