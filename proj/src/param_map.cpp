#include "modelsmc/param_map.hpp"

#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>

namespace modelsmc {

MapEstimate estimate_map(const SurrogateLikelihood& surrogate, const std::vector<double>& x_o,
                         const std::vector<double>& c_o, const BoxPrior& theta_prior,
                         int n_samples, RngStream& rng) {
  if (n_samples < 1) throw std::invalid_argument("estimate_map: n_samples must be >= 1");
  MapEstimate best;
  best.n_samples = n_samples;
  bool have = false;
  for (int i = 0; i < n_samples; ++i) {
    std::vector<double> theta = theta_prior.sample(rng);
    double score = surrogate.log_pdf(x_o, theta, c_o);
    if (std::isnan(score)) score = kNegInf;
    if (!have || score > best.log_posterior) {
      have = true;
      best.theta = std::move(theta);
      best.log_posterior = score;
    }
  }
  best.ok = std::isfinite(best.log_posterior);
  return best;
}

std::vector<MapEstimate> estimate_map_dataset(const SurrogateLikelihood& surrogate,
                                              const ObservedDataset& dataset,
                                              const BoxPrior& theta_prior, int n_samples,
                                              const RngStream& rng, int parallelism) {
  std::vector<MapEstimate> out(dataset.size());
  auto body = [&](std::size_t j) {
    RngStream stream = rng.derive(0, j, "maptheta");
    out[j] = estimate_map(surrogate, dataset.pairs[j].x, dataset.pairs[j].context, theta_prior,
                          n_samples, stream);
  };
  if (parallelism <= 1 || dataset.size() <= 1) {
    for (std::size_t j = 0; j < dataset.size(); ++j) body(j);
    return out;
  }
  std::size_t next = 0;
  while (next < dataset.size()) {
    std::vector<std::future<void>> batch;
    for (int w = 0; w < parallelism && next < dataset.size(); ++w, ++next) {
      batch.push_back(std::async(std::launch::async, body, next));
    }
    for (auto& fut : batch) fut.get();
  }
  return out;
}

ConditionalMetric conditional_loglik_metric(const SurrogateLikelihood& surrogate,
                                            const ObservedDataset& dataset,
                                            const std::vector<MapEstimate>& theta_hats) {
  if (theta_hats.size() != dataset.size()) {
    throw std::invalid_argument("conditional_loglik_metric: one theta-hat per instance required");
  }
  if (dataset.size() == 0) throw std::invalid_argument("conditional_loglik_metric: empty dataset");
  ConditionalMetric metric;
  double sum = 0.0;
  for (std::size_t j = 0; j < dataset.size(); ++j) {
    if (!theta_hats[j].ok) {
      metric.failed = true;
      metric.value = std::numeric_limits<double>::infinity();
      return metric;
    }
    double ll = surrogate.log_pdf(dataset.pairs[j].x, theta_hats[j].theta, dataset.pairs[j].context);
    if (!std::isfinite(ll)) {
      metric.failed = true;
      metric.value = std::numeric_limits<double>::infinity();
      return metric;
    }
    sum += ll;
  }
  metric.value = -sum / static_cast<double>(dataset.size());
  return metric;
}

}  // namespace modelsmc
