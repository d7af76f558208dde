#include "ttaloop/quality.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>

#include "ttaloop/format.hpp"
#include "ttaloop/metrics.hpp"

namespace ttaloop {

void validate_slice_range(const SliceRange& r, int nz) {
  if (r.lo < 0 || r.lo > r.hi || r.hi >= nz) {
    throw ArgumentError("slice range [" + std::to_string(r.lo) + "," + std::to_string(r.hi) +
                        "] invalid for " + std::to_string(nz) + " slices");
  }
}

SoftMedian median_vote(std::span<const ProbMap> preds) {
  if (preds.empty()) throw ArgumentError("median_vote needs at least one prediction");
  const Geometry& g = preds[0].geometry();
  for (const auto& p : preds) require_same_geometry(g, p.geometry(), "median_vote");
  const std::size_t n = preds.size();
  ProbMap prob(g);
  std::vector<float> column(n);
  auto out = prob.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < n; ++k) column[k] = preds[k][i];
    std::sort(column.begin(), column.end());
    if (n % 2 == 1) {
      out[i] = column[n / 2];
    } else {
      const double mid = 0.5 * (static_cast<double>(column[n / 2 - 1]) + column[n / 2]);
      out[i] = static_cast<float>(mid);
    }
  }
  Mask mask = binarize(prob, 0.5);
  return {std::move(prob), std::move(mask)};
}

const char* to_string(Aggregator a) { return a == Aggregator::mean ? "mean" : "median"; }

Aggregator parse_aggregator(const std::string& s) {
  if (s == "mean") return Aggregator::mean;
  if (s == "median") return Aggregator::median;
  throw ValidationError("unknown aggregator '" + s + "'");
}

double aggregate(std::span<const double> values, Aggregator a) {
  if (values.empty()) throw ArgumentError("cannot aggregate an empty score list");
  if (a == Aggregator::mean) {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  return n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

QualityReport estimate_quality(const std::string& case_id, std::span<const ProbMap> preds,
                               const SoftMedian& median, const QualityOptions& options) {
  if (preds.empty()) throw ArgumentError("estimate_quality needs predictions");
  const Geometry& g = median.mask.geometry();
  SliceRange range{0, g.nz() - 1};
  if (options.roi) {
    validate_slice_range(*options.roi, g.nz());
    range = *options.roi;
  }
  QualityReport r;
  r.case_id = case_id;
  r.aggregator = options.aggregator;
  r.roi = options.roi;
  r.ensemble_size = static_cast<int>(preds.size());
  const std::size_t first = options.include_identity ? 0 : 1;
  if (first >= preds.size()) throw ArgumentError("no ensemble members left to score");
  for (std::size_t k = first; k < preds.size(); ++k) {
    require_same_geometry(g, preds[k].geometry(), "estimate_quality");
    r.per_aug_dice.push_back(dice_in_slices(binarize(preds[k], 0.5), median.mask, range.lo, range.hi));
  }
  r.estimated_dice = aggregate(r.per_aug_dice, options.aggregator);
  return r;
}

std::vector<std::string> rank_by_quality(std::span<const QualityReport> reports) {
  std::set<std::string> seen;
  std::vector<const QualityReport*> order;
  for (const auto& r : reports) {
    if (!seen.insert(r.case_id).second) throw ArgumentError("duplicate case id '" + r.case_id + "'");
    order.push_back(&r);
  }
  std::sort(order.begin(), order.end(), [](const QualityReport* a, const QualityReport* b) {
    if (a->estimated_dice != b->estimated_dice) return a->estimated_dice < b->estimated_dice;
    return a->case_id < b->case_id;
  });
  std::vector<std::string> ids;
  for (const auto* r : order) ids.push_back(r->case_id);
  return ids;
}

void write_quality_csv(std::ostream& out, std::span<const QualityReport> reports) {
  out << "case_id,estimated_dice,aggregator,roi_lo,roi_hi,ensemble_size,per_aug_dice\n";
  for (const auto& r : reports) {
    out << r.case_id << ',' << format_double(r.estimated_dice) << ',' << to_string(r.aggregator)
        << ',';
    if (r.roi) out << r.roi->lo;
    out << ',';
    if (r.roi) out << r.roi->hi;
    out << ',' << r.ensemble_size << ',';
    for (std::size_t i = 0; i < r.per_aug_dice.size(); ++i) {
      if (i) out << ';';
      out << format_double(r.per_aug_dice[i]);
    }
    out << '\n';
  }
}

std::vector<QualityReport> read_quality_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("quality CSV is empty");
  std::vector<QualityReport> reports;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) {
      throw ValidationError("quality CSV line " + std::to_string(line_no) + ": expected 7 fields");
    }
    try {
      QualityReport r;
      r.case_id = f[0];
      r.estimated_dice = std::stod(f[1]);
      r.aggregator = parse_aggregator(f[2]);
      if (!f[3].empty() || !f[4].empty()) r.roi = SliceRange{std::stoi(f[3]), std::stoi(f[4])};
      r.ensemble_size = std::stoi(f[5]);
      if (!f[6].empty())
        for (const auto& s : split(f[6], ';')) r.per_aug_dice.push_back(std::stod(s));
      reports.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw ValidationError("quality CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return reports;
}

}  // namespace ttaloop
