#ifndef MODELSMC_TASK_HPP
#define MODELSMC_TASK_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "modelsmc/core.hpp"
#include "modelsmc/likelihood.hpp"

namespace modelsmc {

// Everything the engine needs to run inference on one problem: the observed
// data, priors, a simulator for candidate models, and (optionally) exact
// densities for the Exact weighting path.
struct Task {
  std::string name;
  ObservedDataset observed;
  BoxPrior theta_prior;
  // Samples a raw context vector for synthetic training rows; empty function
  // means the task has no context.
  ContextSampler context_sampler;
  // Applied to raw contexts before they reach a surrogate (e.g. population
  // normalization); identity when unset.
  std::function<std::vector<double>(const std::vector<double>&)> context_map;
  SimulateFn simulate;
  // Closed-form log density per model, when available.
  std::function<ExactDensity::DensityFn(const CandidateModel&)> exact_logpdf_for;
  CandidateModel initial_model;
  std::vector<CandidateModel> pool;  // fixed candidate pool, may be empty
  SummaryFn summary = SummaryFn::identity();
  // Task-private backing data (e.g. the GMM pool parameters) kept alive for
  // the lambdas above.
  std::shared_ptr<void> backing;

  std::vector<double> mapped_context(const std::vector<double>& raw) const {
    return context_map ? context_map(raw) : raw;
  }
};

// Observed datasets as CSV, one row per instance: context columns first,
// then observation columns.
void write_observed_csv(const std::string& path, const ObservedDataset& data);
ObservedDataset read_observed_csv(const std::string& path, int context_dim);

}  // namespace modelsmc

#endif  // MODELSMC_TASK_HPP
