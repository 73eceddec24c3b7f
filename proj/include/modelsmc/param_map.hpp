#ifndef MODELSMC_PARAM_MAP_HPP
#define MODELSMC_PARAM_MAP_HPP

#include <vector>

#include "modelsmc/core.hpp"
#include "modelsmc/likelihood.hpp"

namespace modelsmc {

struct MapEstimate {
  std::vector<double> theta;
  double log_posterior = kNegInf;
  int n_samples = 0;
  bool ok = false;
};

// Prior-sampling argmax of log p_phi(x_o | theta, c_o); with a uniform box
// prior the in-box log prior is constant, so this targets the posterior mode.
MapEstimate estimate_map(const SurrogateLikelihood& surrogate, const std::vector<double>& x_o,
                         const std::vector<double>& c_o, const BoxPrior& theta_prior,
                         int n_samples, RngStream& rng);

struct ConditionalMetric {
  double value = 0.0;  // -(1/M) sum_j log p_phi(x_o^j | theta_hat^j, c_o^j)
  bool failed = false;  // any instance with zero conditional density
};

ConditionalMetric conditional_loglik_metric(const SurrogateLikelihood& surrogate,
                                            const ObservedDataset& dataset,
                                            const std::vector<MapEstimate>& theta_hats);

// Per-instance MAP estimates for a whole dataset (concurrent-safe via
// derived streams).
std::vector<MapEstimate> estimate_map_dataset(const SurrogateLikelihood& surrogate,
                                              const ObservedDataset& dataset,
                                              const BoxPrior& theta_prior, int n_samples,
                                              const RngStream& rng, int parallelism = 1);

}  // namespace modelsmc

#endif  // MODELSMC_PARAM_MAP_HPP
