#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "ttaloop/report.hpp"

using namespace ttaloop;

namespace {

CaseMetricsRow row(const std::string& arm, std::uint64_t seed, const std::string& id, double d,
                   std::optional<double> h = std::nullopt, std::optional<double> a = std::nullopt) {
  return CaseMetricsRow{arm, "in", seed, id, d, h, a};
}

// Two-pass sample statistics.
Stats naive(const std::vector<double>& v) {
  Stats s;
  s.n = v.size();
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.stddev = v.size() < 2 ? 0.0 : std::sqrt(ss / static_cast<double>(v.size() - 1));
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

}  // namespace

TEST(Describe, SampleStandardDeviation) {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  const Stats s = describe(v);
  EXPECT_EQ(s.n, 8u);
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_NEAR(s.stddev, std::sqrt(32.0 / 7.0), 1e-12);
  EXPECT_EQ(s.min, 2.0);
  EXPECT_EQ(s.max, 9.0);
  const std::vector<double> one{0.5};
  EXPECT_EQ(describe(one).stddev, 0.0);
}

TEST(Aggregate, RunLevelUsesSeedMeansAndPerCasePoolsCases) {
  const std::vector<CaseMetricsRow> rows{row("A", 1, "x", 0.8, 2.0), row("A", 1, "y", 0.6),
                                         row("A", 2, "x", 1.0, 4.0), row("A", 2, "y", 1.0, 6.0)};
  const auto seeds = summarize_seeds(rows);
  ASSERT_EQ(seeds.size(), 2u);
  EXPECT_DOUBLE_EQ(seeds[0].dice, 0.7);
  EXPECT_EQ(seeds[0].hausdorff95_mm, 2.0);
  EXPECT_EQ(seeds[0].undefined_distances, 2u);  // y has neither distance
  EXPECT_EQ(seeds[1].hausdorff95_mm, 5.0);

  const auto run = aggregate(rows, AggregationMode::run_level);
  const auto dice_run = std::find_if(run.begin(), run.end(), [](auto& r) { return r.metric == "dice"; });
  ASSERT_NE(dice_run, run.end());
  EXPECT_EQ(dice_run->stats.n, 2u);
  EXPECT_DOUBLE_EQ(dice_run->stats.mean, 0.85);

  const auto cases = aggregate(rows, AggregationMode::per_case);
  const auto hd = std::find_if(cases.begin(), cases.end(), [](auto& r) { return r.metric == "hausdorff95_mm"; });
  ASSERT_NE(hd, cases.end());
  EXPECT_EQ(hd->stats.n, 3u);
  EXPECT_DOUBLE_EQ(hd->stats.mean, 4.0);
}

// Aggregates recomputed from scratch on random result sets.
TEST(Aggregate, MatchesIndependentRecomputation) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<CaseMetricsRow> rows;
    const int arms = 1 + static_cast<int>(rng() % 3), seeds = 1 + static_cast<int>(rng() % 4);
    const int cases = 1 + static_cast<int>(rng() % 5);
    for (int a = 0; a < arms; ++a)
      for (int s = 0; s < seeds; ++s)
        for (int c = 0; c < cases; ++c) {
          std::optional<double> h;
          if (u(rng) < 0.8) h = 10.0 * u(rng);
          rows.push_back(row("arm" + std::to_string(a), static_cast<std::uint64_t>(s), "c" + std::to_string(c),
                             u(rng), h, u(rng)));
        }
    std::map<std::string, std::vector<double>> case_dice, case_hd;
    std::map<std::pair<std::string, std::uint64_t>, std::vector<double>> seed_dice;
    for (const auto& r : rows) {
      case_dice[r.arm].push_back(r.dice);
      if (r.hausdorff95_mm) case_hd[r.arm].push_back(*r.hausdorff95_mm);
      seed_dice[{r.arm, r.seed}].push_back(r.dice);
    }
    std::map<std::string, std::vector<double>> run_dice;
    for (const auto& [key, v] : seed_dice) run_dice[key.first].push_back(naive(v).mean);

    for (const auto& r : aggregate(rows, AggregationMode::per_case)) {
      const std::vector<double>* v = r.metric == "dice" ? &case_dice[r.arm]
                                   : r.metric == "hausdorff95_mm" ? &case_hd[r.arm] : nullptr;
      if (!v) continue;
      const Stats e = naive(*v);
      EXPECT_EQ(r.stats.n, e.n);
      EXPECT_NEAR(r.stats.mean, e.mean, 1e-12);
      EXPECT_NEAR(r.stats.stddev, e.stddev, 1e-12);
      EXPECT_EQ(r.stats.min, e.min);
      EXPECT_EQ(r.stats.max, e.max);
    }
    for (const auto& r : aggregate(rows, AggregationMode::run_level)) {
      if (r.metric != "dice") continue;
      const Stats e = naive(run_dice[r.arm]);
      EXPECT_EQ(r.stats.n, e.n);
      EXPECT_NEAR(r.stats.mean, e.mean, 1e-12);
      EXPECT_NEAR(r.stats.stddev, e.stddev, 1e-12);
    }
  }
}

TEST(Csv, CaseAndSeedRowsRoundTripIncludingMissingDistances) {
  const std::vector<CaseMetricsRow> rows{row("A", 1, "x", 0.123456789012345678, 1.5, std::nullopt),
                                         row("B", 18446744073709551615ull, "y", 1.0, std::nullopt, 0.25)};
  std::stringstream s;
  write_case_csv(s, rows);
  EXPECT_NE(s.str().find("NA"), std::string::npos);
  EXPECT_EQ(read_case_csv(s), rows);
  const auto seeds = summarize_seeds(rows);
  std::stringstream t;
  write_seed_csv(t, seeds);
  EXPECT_EQ(read_seed_csv(t), seeds);
}

TEST(Csv, ModeNamesParse) {
  EXPECT_EQ(parse_aggregation_mode(to_string(AggregationMode::per_case)), AggregationMode::per_case);
  EXPECT_EQ(parse_aggregation_mode(to_string(AggregationMode::run_level)), AggregationMode::run_level);
  EXPECT_ANY_THROW(parse_aggregation_mode("bogus"));
}
