#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ttaloop {

struct CaseMetricsRow {
  std::string arm;
  std::string domain;
  std::uint64_t seed = 0;
  std::string case_id;
  double dice = 0.0;
  std::optional<double> hausdorff95_mm;
  std::optional<double> assd2d_mm;

  bool operator==(const CaseMetricsRow&) const = default;
};

// Mean of each metric over one (arm, domain, seed) group; distances average
// over the cases where they are defined.
struct SeedSummaryRow {
  std::string arm;
  std::string domain;
  std::uint64_t seed = 0;
  std::size_t cases = 0;
  double dice = 0.0;
  std::optional<double> hausdorff95_mm;
  std::optional<double> assd2d_mm;
  std::size_t undefined_distances = 0;

  bool operator==(const SeedSummaryRow&) const = default;
};

enum class AggregationMode {
  per_case,   // statistics over every test case of every seed
  run_level,  // statistics over the per-seed means
};

const char* to_string(AggregationMode m);
AggregationMode parse_aggregation_mode(const std::string& s);

struct Stats {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1), 0 for n < 2
  double min = 0.0;
  double max = 0.0;

  bool operator==(const Stats&) const = default;
};

Stats describe(std::span<const double> values);

struct AggregateRow {
  std::string arm;
  std::string domain;
  std::string metric;  // dice | hausdorff95_mm | assd2d_mm
  AggregationMode mode = AggregationMode::run_level;
  Stats stats;

  bool operator==(const AggregateRow&) const = default;
};

// Groups keep first-appearance order of (arm, domain) and of seeds.
std::vector<SeedSummaryRow> summarize_seeds(std::span<const CaseMetricsRow> rows);
std::vector<AggregateRow> aggregate(std::span<const CaseMetricsRow> rows, AggregationMode mode);

void write_case_csv(std::ostream& out, std::span<const CaseMetricsRow> rows);
std::vector<CaseMetricsRow> read_case_csv(std::istream& in);
void write_seed_csv(std::ostream& out, std::span<const SeedSummaryRow> rows);
std::vector<SeedSummaryRow> read_seed_csv(std::istream& in);
void write_aggregate_csv(std::ostream& out, std::span<const AggregateRow> rows);

// One line per (arm, domain): mean, std, min, max of every metric.
void write_comparison_csv(std::ostream& out, std::span<const AggregateRow> rows);

}  // namespace ttaloop
