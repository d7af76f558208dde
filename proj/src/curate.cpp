#include "ttaloop/curate.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "ttaloop/format.hpp"

namespace ttaloop {

using nlohmann::json;

const char* to_string(LabelKind k) {
  switch (k) {
    case LabelKind::manual_hard:
      return "manual-hard";
    case LabelKind::pseudo_soft:
      return "pseudo-soft";
    case LabelKind::none:
      return "none";
  }
  return "none";
}

LabelKind parse_label_kind(const std::string& s) {
  if (s == "manual-hard") return LabelKind::manual_hard;
  if (s == "pseudo-soft") return LabelKind::pseudo_soft;
  if (s == "none") return LabelKind::none;
  throw ValidationError("unknown label kind '" + s + "'");
}

void validate(const CaseRecord& c) {
  if (c.case_id.empty()) throw ValidationError("case record without id");
  if ((c.label_kind == LabelKind::none) != !c.label_ref.has_value()) {
    throw ValidationError("case " + c.case_id + ": label kind '" + to_string(c.label_kind) +
                          "' inconsistent with label path presence");
  }
  if (c.border && (c.border->lo < 0 || c.border->lo > c.border->hi)) {
    throw ValidationError("case " + c.case_id + ": malformed border");
  }
}

std::vector<std::string> select_al(std::span<const std::string> ranked, std::size_t k) {
  if (k > ranked.size()) {
    throw ArgumentError("cannot select " + std::to_string(k) + " cases from a pool of " +
                        std::to_string(ranked.size()));
  }
  return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k)};
}

double auto_threshold(std::span<const QualityReport> reports, std::size_t n_labeled,
                      std::optional<double> floor) {
  if (reports.empty()) throw ArgumentError("auto_threshold needs at least one report");
  if (n_labeled < 1) throw ArgumentError("n_labeled must be >= 1");
  std::vector<double> scores;
  for (const auto& r : reports) scores.push_back(r.estimated_dice);
  std::sort(scores.begin(), scores.end(), std::greater<>());
  const double threshold = scores[std::min(n_labeled, scores.size()) - 1];
  return floor ? std::max(threshold, *floor) : threshold;
}

std::vector<std::string> select_st(std::span<const QualityReport> reports,
                                   std::span<const std::string> al_ids, double threshold) {
  const std::set<std::string> al(al_ids.begin(), al_ids.end());
  std::vector<std::string> st;
  for (const auto& r : reports) {
    if (!al.count(r.case_id) && r.estimated_dice >= threshold) st.push_back(r.case_id);
  }
  return st;
}

SelectionPlan plan_selection(std::span<const QualityReport> reports, std::size_t k,
                             std::size_t n_labeled, std::optional<double> floor) {
  SelectionPlan plan;
  plan.k_requested = k;
  plan.n_labeled = n_labeled;
  plan.floor = floor;
  const auto ranked = rank_by_quality(reports);
  plan.al_ids = select_al(ranked, k);
  plan.threshold_used = auto_threshold(reports, n_labeled, floor);
  plan.st_ids = select_st(reports, plan.al_ids, plan.threshold_used);
  const std::set<std::string> taken = [&] {
    std::set<std::string> s(plan.al_ids.begin(), plan.al_ids.end());
    s.insert(plan.st_ids.begin(), plan.st_ids.end());
    return s;
  }();
  for (const auto& r : reports)
    if (!taken.count(r.case_id)) plan.excluded_ids.push_back(r.case_id);
  // Input order must not leak into the plan.
  std::sort(plan.st_ids.begin(), plan.st_ids.end());
  std::sort(plan.excluded_ids.begin(), plan.excluded_ids.end());
  const std::size_t reachable = std::min(n_labeled, reports.size() - k);
  plan.count_guarantee_met = plan.st_ids.size() >= reachable;
  return plan;
}

void check_plan(const SelectionPlan& plan, std::span<const QualityReport> reports) {
  std::map<std::string, double> score;
  for (const auto& r : reports) score[r.case_id] = r.estimated_dice;
  std::set<std::string> seen;
  auto claim = [&](const std::vector<std::string>& ids, const char* part) {
    for (const auto& id : ids) {
      if (!score.count(id)) throw ValidationError(std::string(part) + " id '" + id + "' not in pool");
      if (!seen.insert(id).second) {
        throw ValidationError("case '" + id + "' appears in more than one plan partition");
      }
    }
  };
  claim(plan.al_ids, "al");
  claim(plan.st_ids, "st");
  claim(plan.excluded_ids, "excluded");
  if (seen.size() != score.size()) throw ValidationError("plan partitions do not cover the pool");
  if (plan.al_ids.size() != plan.k_requested) throw ValidationError("al size differs from k");
  const auto ranked = rank_by_quality(reports);
  for (std::size_t i = 0; i < plan.al_ids.size(); ++i) {
    if (plan.al_ids[i] != ranked[i]) throw ValidationError("al ids are not the lowest-ranked cases");
  }
  for (const auto& id : plan.st_ids) {
    if (score[id] < plan.threshold_used) {
      throw ValidationError("st case '" + id + "' below threshold");
    }
  }
  for (const auto& id : plan.excluded_ids) {
    if (score[id] >= plan.threshold_used) {
      throw ValidationError("excluded case '" + id + "' passes the threshold");
    }
  }
}

template <GridKind Kind>
Grid<Kind> apply_border_correction(const Grid<Kind>& g, const SliceRange& border) {
  validate_slice_range(border, g.geometry().nz());
  Grid<Kind> out = g;
  const std::size_t plane = g.geometry().slice_voxels();
  auto d = out.data();
  for (int z = 0; z < g.geometry().nz(); ++z) {
    if (z >= border.lo && z <= border.hi) continue;
    std::fill_n(d.begin() + static_cast<std::ptrdiff_t>(z * plane), plane,
                typename Grid<Kind>::value_type{0});
  }
  return out;
}

template ProbMap apply_border_correction(const ProbMap&, const SliceRange&);
template Mask apply_border_correction(const Mask&, const SliceRange&);

const char* to_string(PseudoLabelMode m) {
  return m == PseudoLabelMode::plain_soft ? "plain-soft" : "tta-median-soft";
}

PseudoLabelMode parse_pseudo_label_mode(const std::string& s) {
  if (s == "plain-soft") return PseudoLabelMode::plain_soft;
  if (s == "tta-median-soft") return PseudoLabelMode::tta_median_soft;
  throw ValidationError("unknown pseudo-label mode '" + s + "'");
}

ProbMap build_pseudo_label(PseudoLabelMode mode, std::span<const ProbMap> preds,
                           const SoftMedian& median, const std::optional<SliceRange>& border) {
  ProbMap label;
  if (mode == PseudoLabelMode::plain_soft) {
    if (preds.empty()) throw ArgumentError("plain-soft pseudo-label needs the identity prediction");
    label = preds[0];
  } else {
    label = median.prob;
  }
  if (border) label = apply_border_correction(label, *border);
  return label;
}

std::vector<CaseRecord> TrainSet::all() const {
  std::vector<CaseRecord> out = base;
  out.insert(out.end(), al.begin(), al.end());
  out.insert(out.end(), st.begin(), st.end());
  return out;
}

TrainSet assemble_trainset(std::vector<CaseRecord> base, std::vector<CaseRecord> al,
                           std::vector<CaseRecord> st) {
  std::set<std::string> ids;
  auto admit = [&](const std::vector<CaseRecord>& part, const char* name) {
    for (const auto& c : part) {
      validate(c);
      if (!ids.insert(c.case_id).second) {
        throw ConflictError("case id '" + c.case_id + "' already present (" + name + ")");
      }
    }
  };
  admit(base, "base");
  admit(al, "al");
  admit(st, "st");
  for (const auto& c : base) {
    if (c.label_kind == LabelKind::none) throw ValidationError("base case " + c.case_id + " has no label");
  }
  for (const auto& c : al) {
    if (c.label_kind != LabelKind::manual_hard) {
      throw ValidationError("al case " + c.case_id + " must carry a manual-hard label");
    }
  }
  for (const auto& c : st) {
    if (c.label_kind != LabelKind::pseudo_soft) {
      throw ValidationError("st case " + c.case_id + " must carry a pseudo-soft label");
    }
  }
  return TrainSet{std::move(base), std::move(al), std::move(st)};
}

json to_json(const SliceRange& r) { return json::array({r.lo, r.hi}); }

json to_json(const CaseRecord& c) {
  json j{{"case_id", c.case_id},
         {"volume", c.volume_ref},
         {"label_kind", to_string(c.label_kind)},
         {"domain_tag", c.domain_tag}};
  j["label"] = c.label_ref ? json(*c.label_ref) : json(nullptr);
  j["border"] = c.border ? to_json(*c.border) : json(nullptr);
  return j;
}

CaseRecord case_record_from_json(const json& j) {
  CaseRecord c;
  try {
    c.case_id = j.at("case_id").get<std::string>();
    c.volume_ref = j.at("volume").get<std::string>();
    c.label_kind = parse_label_kind(j.at("label_kind").get<std::string>());
    c.domain_tag = j.value("domain_tag", "");
    if (j.contains("label") && !j["label"].is_null()) c.label_ref = j["label"].get<std::string>();
    if (j.contains("border") && !j["border"].is_null()) {
      c.border = SliceRange{j["border"].at(0).get<int>(), j["border"].at(1).get<int>()};
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("case record: ") + e.what());
  }
  validate(c);
  return c;
}

json to_json(const SelectionPlan& p) {
  json j{{"al_ids", p.al_ids},
         {"st_ids", p.st_ids},
         {"excluded_ids", p.excluded_ids},
         {"threshold_used", p.threshold_used},
         {"k_requested", p.k_requested},
         {"n_labeled", p.n_labeled},
         {"count_guarantee_met", p.count_guarantee_met}};
  j["floor"] = p.floor ? json(*p.floor) : json(nullptr);
  return j;
}

SelectionPlan plan_from_json(const json& j) {
  SelectionPlan p;
  try {
    p.al_ids = j.at("al_ids").get<std::vector<std::string>>();
    p.st_ids = j.at("st_ids").get<std::vector<std::string>>();
    p.excluded_ids = j.at("excluded_ids").get<std::vector<std::string>>();
    p.threshold_used = j.at("threshold_used").get<double>();
    p.k_requested = j.at("k_requested").get<std::size_t>();
    p.n_labeled = j.at("n_labeled").get<std::size_t>();
    p.count_guarantee_met = j.at("count_guarantee_met").get<bool>();
    if (!j.at("floor").is_null()) p.floor = j["floor"].get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("selection plan: ") + e.what());
  }
  return p;
}

json to_json(const TrainSet& t) {
  json j = json::object();
  for (const auto* part : {&t.base, &t.al, &t.st}) {
    const char* name = part == &t.base ? "base" : part == &t.al ? "al" : "st";
    json arr = json::array();
    for (const auto& c : *part) arr.push_back(to_json(c));
    j[name] = arr;
  }
  return j;
}

void write_worklist_csv(std::ostream& out, std::span<const WorklistEntry> entries) {
  out << "case_id,volume_path,estimated_dice\n";
  for (const auto& e : entries) {
    out << e.case_id << ',' << e.volume_ref << ',' << format_double(e.estimated_dice) << '\n';
  }
}

std::vector<WorklistEntry> read_worklist_csv(std::istream& in) {
  std::string line;
  std::getline(in, line);
  std::vector<WorklistEntry> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw ValidationError("worklist line needs 3 fields: " + line);
    out.push_back({f[0], f[1], std::stod(f[2])});
  }
  return out;
}

}  // namespace ttaloop
