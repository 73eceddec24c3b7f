#ifndef MODELSMC_REPORTS_HPP
#define MODELSMC_REPORTS_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "modelsmc/engine.hpp"

namespace modelsmc {

// CSV of the target model's resampled-population frequency per iteration,
// aggregated across runs: iteration, mean, min, max. Runs that stopped early
// carry their last frequency forward. All logs must be for the same task.
std::string report_freq_csv(const std::vector<RunRecord>& logs, const std::string& target_model_id);

// Per-run frequency series (iteration number, frequency).
std::vector<std::pair<int, double>> target_frequency_series(const RunRecord& record,
                                                            const std::string& target_model_id);

// CSV (cumulative_tokens, best_neg_log_marginal) averaged over the top_k
// logs by final best metric, sampled on the union token grid. A warning is
// set when fewer logs than requested exist.
std::string report_tokens_csv(const std::vector<RunRecord>& logs, int top_k = 5,
                              std::string* warning = nullptr);

double median(std::vector<double> values);

// Percentile bootstrap of the median: n_boot resamples of the same size,
// returning the (lo, hi) quantiles of the resampled medians.
std::pair<double, double> bootstrap_ci_median(const std::vector<double>& values, int n_boot,
                                              std::uint64_t seed, double lo = 0.05,
                                              double hi = 0.95);

struct MetricGroup {
  std::string method;
  std::vector<double> values;  // best-particle metric per run
};

// CSV per method: median metric and 90% bootstrap CI. Empty groups are
// skipped with a warning.
std::string table_metrics_csv(const std::vector<MetricGroup>& groups, int n_boot = 10000,
                              std::uint64_t seed = 0, std::string* warning = nullptr);

}  // namespace modelsmc

#endif  // MODELSMC_REPORTS_HPP
