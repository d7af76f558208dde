#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttaloop/volume.hpp"

namespace ttaloop {

// Inclusive slice interval [lo, hi] along z.
struct SliceRange {
  int lo = 0;
  int hi = 0;
  bool operator==(const SliceRange&) const = default;
};

void validate_slice_range(const SliceRange& r, int nz);

struct SoftMedian {
  ProbMap prob;
  Mask mask;  // prob >= 0.5
};

// Voxelwise median; with an even count the two central values are averaged.
SoftMedian median_vote(std::span<const ProbMap> preds);

enum class Aggregator { mean, median };

const char* to_string(Aggregator a);
Aggregator parse_aggregator(const std::string& s);

struct QualityOptions {
  Aggregator aggregator = Aggregator::mean;
  std::optional<SliceRange> roi;
  // When false, preds[0] (the identity member) is left out of per_aug_dice.
  bool include_identity = true;
};

struct QualityReport {
  std::string case_id;
  double estimated_dice = 1.0;
  std::vector<double> per_aug_dice;
  Aggregator aggregator = Aggregator::mean;
  std::optional<SliceRange> roi;
  int ensemble_size = 0;

  bool operator==(const QualityReport&) const = default;
};

// Estimated Dice: each member prediction is binarised at 0.5 and compared
// with the median mask (inside the ROI slices when given), then aggregated.
QualityReport estimate_quality(const std::string& case_id, std::span<const ProbMap> preds,
                               const SoftMedian& median, const QualityOptions& options = {});

double aggregate(std::span<const double> values, Aggregator a);

// Ascending estimated Dice, ties broken by case id.
std::vector<std::string> rank_by_quality(std::span<const QualityReport> reports);

// CSV: case_id,estimated_dice,aggregator,roi_lo,roi_hi,ensemble_size,per_aug_dice
// with empty roi fields when no ROI was used and the per-member scores joined by ';'.
void write_quality_csv(std::ostream& out, std::span<const QualityReport> reports);
std::vector<QualityReport> read_quality_csv(std::istream& in);

}  // namespace ttaloop
