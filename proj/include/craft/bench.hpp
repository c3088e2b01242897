#pragma once

#include <string>
#include <vector>

namespace craft {

struct BenchRow {
  std::string knob;
  double value = 0.0;
  double mean_ns = 0.0;
  double p50_ns = 0.0;
  double p95_ns = 0.0;
  std::size_t repeats = 0;
};

struct BenchGrid {
  /// Source degrees for neighbor extraction timing.
  std::vector<std::size_t> degrees{1000, 1000000};
  /// Context sizes for scoring timing (q fixed at q_fixed).
  std::vector<std::size_t> ks;
  /// Negative counts for scoring timing (k fixed at k_fixed).
  std::vector<std::size_t> qs{50, 100, 200, 400, 800};
  std::size_t k_fixed = 30;
  std::size_t q_fixed = 100;
  std::size_t d = 64;
  std::size_t batch = 8;
  std::size_t extraction_queries = 20000;
  std::size_t repeats = 7;
  /// Also time a per-candidate aggregation baseline whose cost grows like
  /// (1 + q) k d^2, for every q in `qs`.
  bool per_candidate_baseline = true;
  std::uint64_t seed = 0;
};

/// Times neighbor extraction against degree ("degree"), scoring against k
/// ("k") and q ("q"), and the simulated per-candidate aggregation against q
/// ("q_per_candidate"). Extraction rows report time per query; scoring rows
/// report time per batch. Throws std::invalid_argument for k = 0 or q = 0.
std::vector<BenchRow> bench_complexity(const BenchGrid& grid);

/// Least-squares slope of log(mean_ns) against log(value) over one knob.
double loglog_slope(const std::vector<BenchRow>& rows, const std::string& knob);

/// Mean time of the row with the given knob and value.
double bench_mean(const std::vector<BenchRow>& rows, const std::string& knob, double value);

/// CSV with columns knob,value,mean_ns,p50_ns,p95_ns,repeats.
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace craft
