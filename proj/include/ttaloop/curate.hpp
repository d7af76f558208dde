#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ttaloop/quality.hpp"
#include "ttaloop/volume.hpp"

namespace ttaloop {

enum class LabelKind { manual_hard, pseudo_soft, none };

const char* to_string(LabelKind k);
LabelKind parse_label_kind(const std::string& s);

struct CaseRecord {
  std::string case_id;
  std::string volume_ref;
  std::optional<std::string> label_ref;
  LabelKind label_kind = LabelKind::none;
  std::optional<SliceRange> border;
  std::string domain_tag;

  bool operator==(const CaseRecord&) const = default;
};

// label_kind == none exactly when label_ref is absent; border ordered.
void validate(const CaseRecord& c);

struct SelectionPlan {
  std::vector<std::string> al_ids;
  std::vector<std::string> st_ids;
  std::vector<std::string> excluded_ids;
  double threshold_used = 0.0;
  std::size_t k_requested = 0;
  std::size_t n_labeled = 0;
  std::optional<double> floor;
  // False when a floor pushed the threshold above the n_labeled-th score and
  // fewer than n_labeled cases survived.
  bool count_guarantee_met = true;

  bool operator==(const SelectionPlan&) const = default;
};

// First k ids of an ascending ranking.
std::vector<std::string> select_al(std::span<const std::string> ranked, std::size_t k);

// The n_labeled-th largest estimated Dice (the smallest score when the pool is
// smaller than n_labeled), raised to `floor` when given.
double auto_threshold(std::span<const QualityReport> reports, std::size_t n_labeled,
                      std::optional<double> floor = std::nullopt);

// Non-AL cases with estimated Dice >= threshold, in report order.
std::vector<std::string> select_st(std::span<const QualityReport> reports,
                                   std::span<const std::string> al_ids, double threshold);

// Full combined selection: rank, take k for annotation, auto-threshold the
// rest. n_labeled is the labelled-set size the threshold has to match.
SelectionPlan plan_selection(std::span<const QualityReport> reports, std::size_t k,
                             std::size_t n_labeled, std::optional<double> floor = std::nullopt);

// Throws ValidationError unless the plan partitions `pool` and respects the
// threshold and ranking rules against `reports`.
void check_plan(const SelectionPlan& plan, std::span<const QualityReport> reports);

// Zeroes every slice outside [border.lo, border.hi].
template <GridKind Kind>
Grid<Kind> apply_border_correction(const Grid<Kind>& g, const SliceRange& border);

enum class PseudoLabelMode { plain_soft, tta_median_soft };

const char* to_string(PseudoLabelMode m);
PseudoLabelMode parse_pseudo_label_mode(const std::string& s);

// plain_soft takes preds[0] (the identity member); tta_median_soft takes the
// soft median. The border correction follows when a border is given.
ProbMap build_pseudo_label(PseudoLabelMode mode, std::span<const ProbMap> preds,
                           const SoftMedian& median, const std::optional<SliceRange>& border);

struct TrainSet {
  std::vector<CaseRecord> base;
  std::vector<CaseRecord> al;
  std::vector<CaseRecord> st;

  std::vector<CaseRecord> all() const;
  std::size_t size() const { return base.size() + al.size() + st.size(); }
};

// Checks id disjointness (ConflictError) and label kinds (ValidationError).
TrainSet assemble_trainset(std::vector<CaseRecord> base, std::vector<CaseRecord> al,
                           std::vector<CaseRecord> st);

nlohmann::json to_json(const SliceRange& r);
nlohmann::json to_json(const CaseRecord& c);
nlohmann::json to_json(const SelectionPlan& p);
nlohmann::json to_json(const TrainSet& t);
CaseRecord case_record_from_json(const nlohmann::json& j);
SelectionPlan plan_from_json(const nlohmann::json& j);

struct WorklistEntry {
  std::string case_id;
  std::string volume_ref;
  double estimated_dice = 0.0;
};

// CSV: case_id,volume_path,estimated_dice
void write_worklist_csv(std::ostream& out, std::span<const WorklistEntry> entries);
std::vector<WorklistEntry> read_worklist_csv(std::istream& in);

}  // namespace ttaloop
