#include "ttaloop/report.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "ttaloop/error.hpp"
#include "ttaloop/format.hpp"

namespace ttaloop {

namespace {

std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

std::optional<double> parse_opt(const std::string& s) {
  if (s == "NA" || s.empty()) return std::nullopt;
  return std::stod(s);
}

using GroupKey = std::pair<std::string, std::string>;

template <typename Row>
std::vector<GroupKey> group_order(std::span<const Row> rows) {
  std::vector<GroupKey> keys;
  for (const auto& r : rows) {
    GroupKey k{r.arm, r.domain};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  return keys;
}

constexpr const char* kMetrics[3] = {"dice", "hausdorff95_mm", "assd2d_mm"};

}  // namespace

const char* to_string(AggregationMode m) {
  return m == AggregationMode::per_case ? "per-case" : "run-level";
}

AggregationMode parse_aggregation_mode(const std::string& s) {
  if (s == "per-case") return AggregationMode::per_case;
  if (s == "run-level") return AggregationMode::run_level;
  throw ValidationError("unknown aggregation mode '" + s + "'");
}

Stats describe(std::span<const double> values) {
  Stats s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.stddev = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) : 0.0;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  return s;
}

std::vector<SeedSummaryRow> summarize_seeds(std::span<const CaseMetricsRow> rows) {
  std::vector<SeedSummaryRow> out;
  for (const auto& key : group_order(rows)) {
    std::vector<std::uint64_t> seeds;
    for (const auto& r : rows)
      if (r.arm == key.first && r.domain == key.second &&
          std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end())
        seeds.push_back(r.seed);
    for (auto seed : seeds) {
      SeedSummaryRow s;
      s.arm = key.first;
      s.domain = key.second;
      s.seed = seed;
      double dice = 0.0, hd = 0.0, assd = 0.0;
      std::size_t n_hd = 0, n_assd = 0;
      for (const auto& r : rows) {
        if (r.arm != key.first || r.domain != key.second || r.seed != seed) continue;
        ++s.cases;
        dice += r.dice;
        if (r.hausdorff95_mm) {
          hd += *r.hausdorff95_mm;
          ++n_hd;
        }
        if (r.assd2d_mm) {
          assd += *r.assd2d_mm;
          ++n_assd;
        }
        if (!r.hausdorff95_mm || !r.assd2d_mm) ++s.undefined_distances;
      }
      s.dice = dice / static_cast<double>(s.cases);
      if (n_hd) s.hausdorff95_mm = hd / static_cast<double>(n_hd);
      if (n_assd) s.assd2d_mm = assd / static_cast<double>(n_assd);
      out.push_back(s);
    }
  }
  return out;
}

std::vector<AggregateRow> aggregate(std::span<const CaseMetricsRow> rows, AggregationMode mode) {
  std::vector<AggregateRow> out;
  const auto seeds = summarize_seeds(rows);
  for (const auto& key : group_order(rows)) {
    for (int m = 0; m < 3; ++m) {
      std::vector<double> values;
      if (mode == AggregationMode::per_case) {
        for (const auto& r : rows) {
          if (r.arm != key.first || r.domain != key.second) continue;
          const std::optional<double> v =
              m == 0 ? std::optional<double>(r.dice) : m == 1 ? r.hausdorff95_mm : r.assd2d_mm;
          if (v) values.push_back(*v);
        }
      } else {
        for (const auto& s : seeds) {
          if (s.arm != key.first || s.domain != key.second) continue;
          const std::optional<double> v =
              m == 0 ? std::optional<double>(s.dice) : m == 1 ? s.hausdorff95_mm : s.assd2d_mm;
          if (v) values.push_back(*v);
        }
      }
      out.push_back({key.first, key.second, kMetrics[m], mode, describe(values)});
    }
  }
  return out;
}

void write_case_csv(std::ostream& out, std::span<const CaseMetricsRow> rows) {
  out << "arm,domain,seed,case_id,dice,hausdorff95_mm,assd2d_mm\n";
  for (const auto& r : rows) {
    out << r.arm << ',' << r.domain << ',' << r.seed << ',' << r.case_id << ','
        << format_double(r.dice) << ',' << opt_text(r.hausdorff95_mm) << ','
        << opt_text(r.assd2d_mm) << '\n';
  }
}

std::vector<CaseMetricsRow> read_case_csv(std::istream& in) {
  std::string line;
  std::getline(in, line);
  std::vector<CaseMetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw ValidationError("per-case CSV line needs 7 fields: " + line);
    rows.push_back({f[0], f[1], std::stoull(f[2]), f[3], std::stod(f[4]), parse_opt(f[5]),
                    parse_opt(f[6])});
  }
  return rows;
}

void write_seed_csv(std::ostream& out, std::span<const SeedSummaryRow> rows) {
  out << "arm,domain,seed,cases,dice,hausdorff95_mm,assd2d_mm,undefined_distances\n";
  for (const auto& r : rows) {
    out << r.arm << ',' << r.domain << ',' << r.seed << ',' << r.cases << ','
        << format_double(r.dice) << ',' << opt_text(r.hausdorff95_mm) << ','
        << opt_text(r.assd2d_mm) << ',' << r.undefined_distances << '\n';
  }
}

std::vector<SeedSummaryRow> read_seed_csv(std::istream& in) {
  std::string line;
  std::getline(in, line);
  std::vector<SeedSummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 8) throw ValidationError("per-seed CSV line needs 8 fields: " + line);
    rows.push_back({f[0], f[1], std::stoull(f[2]), std::stoul(f[3]), std::stod(f[4]),
                    parse_opt(f[5]), parse_opt(f[6]), std::stoul(f[7])});
  }
  return rows;
}

void write_aggregate_csv(std::ostream& out, std::span<const AggregateRow> rows) {
  out << "arm,domain,metric,mode,n,mean,std,min,max\n";
  for (const auto& r : rows) {
    out << r.arm << ',' << r.domain << ',' << r.metric << ',' << to_string(r.mode) << ','
        << r.stats.n << ',' << format_double(r.stats.mean) << ',' << format_double(r.stats.stddev)
        << ',' << format_double(r.stats.min) << ',' << format_double(r.stats.max) << '\n';
  }
}

void write_comparison_csv(std::ostream& out, std::span<const AggregateRow> rows) {
  out << "arm,domain,mode";
  for (const char* m : kMetrics) out << ',' << m << "_mean," << m << "_std," << m << "_min," << m << "_max";
  out << '\n';
  for (const auto& key : group_order(rows)) {
    std::map<std::string, const AggregateRow*> by_metric;
    for (const auto& r : rows)
      if (r.arm == key.first && r.domain == key.second) by_metric[r.metric] = &r;
    out << key.first << ',' << key.second << ','
        << (by_metric.empty() ? "" : to_string(by_metric.begin()->second->mode));
    for (const char* m : kMetrics) {
      const auto it = by_metric.find(m);
      if (it == by_metric.end() || it->second->stats.n == 0) {
        out << ",NA,NA,NA,NA";
        continue;
      }
      const Stats& s = it->second->stats;
      out << ',' << format_fixed(s.mean, 4) << ',' << format_fixed(s.stddev, 4) << ','
          << format_fixed(s.min, 4) << ',' << format_fixed(s.max, 4);
    }
    out << '\n';
  }
}

}  // namespace ttaloop
