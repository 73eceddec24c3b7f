#include "modelsmc/core.hpp"

#include <algorithm>
#include <cmath>

namespace modelsmc {

double log_sum_exp(const std::vector<double>& log_values) {
  double max_val = kNegInf;
  for (double v : log_values) max_val = std::max(max_val, v);
  if (max_val == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : log_values) {
    if (v != kNegInf) acc += std::exp(v - max_val);
  }
  return max_val + std::log(acc);
}

std::vector<double> normalize_log_weights(const std::vector<double>& log_weights) {
  if (log_weights.empty()) {
    throw std::invalid_argument("normalize_log_weights: empty input");
  }
  for (double v : log_weights) {
    if (std::isnan(v)) throw std::invalid_argument("normalize_log_weights: NaN log weight");
  }
  const double lse = log_sum_exp(log_weights);
  if (lse == kNegInf) {
    throw std::runtime_error("all particles failed");
  }
  std::vector<double> weights(log_weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] = log_weights[i] == kNegInf ? 0.0 : std::exp(log_weights[i] - lse);
  }
  return weights;
}

}  // namespace modelsmc
