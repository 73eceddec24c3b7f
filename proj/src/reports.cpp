#include "modelsmc/reports.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "modelsmc/rng.hpp"

namespace modelsmc {

namespace {

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

}  // namespace

std::vector<std::pair<int, double>> target_frequency_series(const RunRecord& record,
                                                            const std::string& target_model_id) {
  std::vector<std::pair<int, double>> series;
  for (const auto& it : record.iterations) {
    if (it.entries.empty()) continue;
    std::size_t hits = 0;
    for (const auto& e : it.entries) {
      if (e.model_id == target_model_id) ++hits;
    }
    series.emplace_back(it.iteration,
                        static_cast<double>(hits) / static_cast<double>(it.entries.size()));
  }
  return series;
}

std::string report_freq_csv(const std::vector<RunRecord>& logs,
                            const std::string& target_model_id) {
  if (logs.empty()) throw std::invalid_argument("report_freq: no logs");
  for (const auto& log : logs) {
    if (log.task_name != logs.front().task_name) {
      throw std::invalid_argument("report_freq: logs mix task types");
    }
  }
  std::vector<std::vector<std::pair<int, double>>> series;
  int max_iteration = 0;
  for (const auto& log : logs) {
    series.push_back(target_frequency_series(log, target_model_id));
    if (series.back().empty()) throw std::invalid_argument("report_freq: log has no iterations");
    max_iteration = std::max(max_iteration, series.back().back().first);
  }
  const int min_iteration = series.front().front().first;

  std::ostringstream out;
  out << "iteration,mean_frequency,min_frequency,max_frequency\n";
  for (int k = min_iteration; k <= max_iteration; ++k) {
    double sum = 0.0, lo = 1.0, hi = 0.0;
    for (const auto& s : series) {
      // Last value at or before k (carry forward after early stop).
      double value = s.front().second;
      for (const auto& [it, freq] : s) {
        if (it > k) break;
        value = freq;
      }
      sum += value;
      lo = std::min(lo, value);
      hi = std::max(hi, value);
    }
    out << k << "," << fmt(sum / static_cast<double>(series.size())) << "," << fmt(lo) << ","
        << fmt(hi) << "\n";
  }
  return out.str();
}

namespace {

// Best-so-far negative log marginal after each cumulative-token checkpoint.
std::vector<std::pair<std::int64_t, double>> token_curve(const RunRecord& record) {
  std::vector<std::pair<std::int64_t, double>> curve;
  std::int64_t tokens = 0;
  double best = kNegInf;
  for (const auto& it : record.iterations) {
    for (const auto& e : it.entries) {
      tokens += e.prompt_tokens + e.completion_tokens;
      best = std::max(best, e.log_weight);
    }
    curve.emplace_back(tokens, best == kNegInf ? std::numeric_limits<double>::infinity() : -best);
  }
  return curve;
}

double curve_at(const std::vector<std::pair<std::int64_t, double>>& curve, std::int64_t t) {
  double value = curve.front().second;
  for (const auto& [tok, v] : curve) {
    if (tok > t) break;
    value = v;
  }
  return value;
}

}  // namespace

std::string report_tokens_csv(const std::vector<RunRecord>& logs, int top_k,
                              std::string* warning) {
  if (logs.empty()) throw std::invalid_argument("report_tokens: no logs");
  if (static_cast<int>(logs.size()) < top_k && warning != nullptr) {
    *warning = "report_tokens: only " + std::to_string(logs.size()) + " logs available, " +
               std::to_string(top_k) + " requested";
  }
  std::vector<std::vector<std::pair<std::int64_t, double>>> curves;
  for (const auto& log : logs) {
    auto curve = token_curve(log);
    if (curve.empty()) throw std::invalid_argument("report_tokens: log has no iterations");
    curves.push_back(std::move(curve));
  }
  // Keep the top_k logs with the lowest (best) final metric.
  std::vector<std::size_t> order(curves.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return curves[a].back().second < curves[b].back().second;
  });
  order.resize(std::min<std::size_t>(order.size(), static_cast<std::size_t>(top_k)));

  std::set<std::int64_t> grid;
  for (std::size_t i : order) {
    for (const auto& [tok, v] : curves[i]) grid.insert(tok);
  }
  std::ostringstream out;
  out << "cumulative_tokens,mean_best_neg_log_marginal\n";
  for (std::int64_t t : grid) {
    double sum = 0.0;
    for (std::size_t i : order) sum += curve_at(curves[i], t);
    out << t << "," << fmt(sum / static_cast<double>(order.size())) << "\n";
  }
  return out.str();
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::pair<double, double> bootstrap_ci_median(const std::vector<double>& values, int n_boot,
                                              std::uint64_t seed, double lo, double hi) {
  if (values.empty()) throw std::invalid_argument("bootstrap_ci_median: empty");
  RngStream rng = RngStream(seed).derive(0, 0, "bootstrap");
  std::vector<double> medians(static_cast<std::size_t>(n_boot));
  std::vector<double> resample(values.size());
  for (int b = 0; b < n_boot; ++b) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      resample[i] = values[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(values.size()) - 1))];
    }
    medians[static_cast<std::size_t>(b)] = median(resample);
  }
  std::sort(medians.begin(), medians.end());
  auto quantile = [&](double q) {
    double idx = q * static_cast<double>(medians.size() - 1);
    std::size_t below = static_cast<std::size_t>(std::floor(idx));
    std::size_t above = std::min(below + 1, medians.size() - 1);
    double frac = idx - std::floor(idx);
    return (1.0 - frac) * medians[below] + frac * medians[above];
  };
  return {quantile(lo), quantile(hi)};
}

std::string table_metrics_csv(const std::vector<MetricGroup>& groups, int n_boot,
                              std::uint64_t seed, std::string* warning) {
  std::ostringstream out;
  out << "method,n_runs,median,ci_low,ci_high\n";
  for (const auto& group : groups) {
    if (group.values.empty()) {
      if (warning != nullptr) {
        if (!warning->empty()) *warning += "; ";
        *warning += "table_metrics: group '" + group.method + "' is empty, omitted";
      }
      continue;
    }
    auto [lo, hi] = bootstrap_ci_median(group.values, n_boot, seed);
    out << group.method << "," << group.values.size() << "," << fmt(median(group.values)) << ","
        << fmt(lo) << "," << fmt(hi) << "\n";
  }
  return out.str();
}

}  // namespace modelsmc
