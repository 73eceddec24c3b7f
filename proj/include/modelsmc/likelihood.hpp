#ifndef MODELSMC_LIKELIHOOD_HPP
#define MODELSMC_LIKELIHOOD_HPP

#include <Eigen/Dense>
#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "modelsmc/core.hpp"

namespace modelsmc {

// Outcome of one simulator call; failures are data, not exceptions, so they
// can be captured into feedback.
struct SimOutcome {
  bool ok = false;
  std::vector<double> x;
  std::string error;
};

using SimulateFn = std::function<SimOutcome(const CandidateModel&, const std::vector<double>&,
                                            const std::vector<double>&, RngStream&)>;
using ContextSampler = std::function<std::vector<double>(RngStream&)>;

// --- Summary statistics ----------------------------------------------------

class SummaryFn {
 public:
  SummaryFn() : SummaryFn(identity()) {}

  static SummaryFn identity();
  // Two-dimensional summary: per-trace mean and standard deviation.
  static SummaryFn mean_std();

  const std::string& name() const { return name_; }
  bool is_identity() const { return name_ == "identity"; }
  std::vector<double> operator()(const std::vector<double>& x) const { return fn_(x); }

 private:
  SummaryFn(std::string name, std::function<std::vector<double>(const std::vector<double>&)> fn)
      : name_(std::move(name)), fn_(std::move(fn)) {}

  std::string name_;
  std::function<std::vector<double>(const std::vector<double>&)> fn_;
};

// --- Synthetic training data -----------------------------------------------

struct SyntheticRow {
  std::vector<double> theta;
  std::vector<double> context;
  std::vector<double> x;
};

struct SyntheticDataset {
  std::vector<SyntheticRow> rows;
  double failure_fraction = 0.0;
  std::string first_failure;  // diagnostics from the first failed simulation
  int param_dim = 0;
  int context_dim = 0;
  int obs_dim = 0;
};

// theta ~ prior, c ~ context sampler, x = simulate(model, theta, c). Rows
// with failed simulations are dropped and counted; throws
// "simulation failure fraction ..." when more than half fail.
SyntheticDataset build_training_set(const CandidateModel& model, const SimulateFn& simulate,
                                    const BoxPrior& theta_prior,
                                    const ContextSampler& context_sampler, int n_sim,
                                    const RngStream& rng);

// Replace every observation x by s(x); the identity summary is a no-op.
SyntheticDataset apply_summary(const SummaryFn& s, const SyntheticDataset& data);
ObservedDataset apply_summary(const SummaryFn& s, const ObservedDataset& data);

// --- Surrogate conditional densities ---------------------------------------

class SurrogateLikelihood {
 public:
  virtual ~SurrogateLikelihood() = default;

  virtual double log_pdf(const std::vector<double>& x, const std::vector<double>& theta,
                         const std::vector<double>& context) const = 0;

  // Evaluate many (x, context) pairs at one theta; KDE overrides this to
  // share the neighbor search when all contexts coincide.
  virtual std::vector<double> log_pdf_batch(const std::vector<std::vector<double>>& xs,
                                            const std::vector<std::vector<double>>& contexts,
                                            const std::vector<double>& theta) const;

  virtual bool variance_floored() const { return false; }

  // Per-dimension [min, max] of the training observations, when the
  // surrogate was fitted from data; evaluations outside are extrapolations
  // and are recorded by the engine but not corrected.
  virtual std::optional<std::pair<std::vector<double>, std::vector<double>>> training_range()
      const {
    return std::nullopt;
  }
};

// Per-output-dimension linear-Gaussian fit on (theta, c) features.
class ConditionalGaussian : public SurrogateLikelihood {
 public:
  ConditionalGaussian(const SyntheticDataset& data, double variance_floor = 1e-6);

  double log_pdf(const std::vector<double>& x, const std::vector<double>& theta,
                 const std::vector<double>& context) const override;
  bool variance_floored() const override { return floored_; }
  std::optional<std::pair<std::vector<double>, std::vector<double>>> training_range()
      const override {
    return {{x_min_, x_max_}};
  }

  // (obs_dim x n_features+1) coefficient matrix, intercept last.
  const Eigen::MatrixXd& coefficients() const { return coef_; }
  const Eigen::VectorXd& noise_variance() const { return variance_; }

 private:
  Eigen::MatrixXd coef_;
  Eigen::VectorXd variance_;
  std::vector<double> x_min_, x_max_;
  int n_features_ = 0;
  bool floored_ = false;
};

// k-nearest-neighbor mixture of product Gaussian kernels: neighbors are
// found in standardized (theta, c) space and the conditional density is the
// normalized kernel mixture over their observations.
class ConditionalKde : public SurrogateLikelihood {
 public:
  ConditionalKde(const SyntheticDataset& data, int k_neighbors = 50,
                 double bandwidth_scale = 1.0, double variance_floor = 1e-6);

  double log_pdf(const std::vector<double>& x, const std::vector<double>& theta,
                 const std::vector<double>& context) const override;
  std::vector<double> log_pdf_batch(const std::vector<std::vector<double>>& xs,
                                    const std::vector<std::vector<double>>& contexts,
                                    const std::vector<double>& theta) const override;
  bool variance_floored() const override { return floored_; }
  std::optional<std::pair<std::vector<double>, std::vector<double>>> training_range()
      const override {
    return {{x_min_, x_max_}};
  }

 private:
  struct Slice {
    Eigen::MatrixXd centers;       // k x obs_dim neighbor observations
    Eigen::ArrayXd inv_bandwidth;  // obs_dim
    double log_norm = 0.0;         // -log k - sum log(h_d sqrt(2 pi))
  };

  Slice condition(const std::vector<double>& theta, const std::vector<double>& context) const;
  double eval_slice(const Slice& slice, const std::vector<double>& x) const;

  Eigen::MatrixXd features_;  // n x feat_dim, standardized
  Eigen::MatrixXd obs_;       // n x obs_dim
  Eigen::ArrayXd feat_mean_, feat_inv_sd_;
  Eigen::ArrayXd global_obs_sd_;
  std::vector<double> x_min_, x_max_;
  int k_ = 50;
  double bandwidth_scale_ = 1.0;
  double variance_floor_ = 1e-6;
  // Flooring is detected per query slice; atomic so concurrent evaluation
  // stays safe.
  mutable std::atomic<bool> floored_{false};
};

// Closed-form density supplied by the task.
class ExactDensity : public SurrogateLikelihood {
 public:
  using DensityFn = std::function<double(const std::vector<double>& x,
                                         const std::vector<double>& theta,
                                         const std::vector<double>& context)>;

  explicit ExactDensity(DensityFn fn) : fn_(std::move(fn)) {}

  double log_pdf(const std::vector<double>& x, const std::vector<double>& theta,
                 const std::vector<double>& context) const override {
    return fn_(x, theta, context);
  }

 private:
  DensityFn fn_;
};

enum class SurrogateKind { ConditionalGaussian, ConditionalKde, Exact };

struct SurrogateSettings {
  SurrogateKind kind = SurrogateKind::ConditionalGaussian;
  double variance_floor = 1e-6;
  int knn = 50;
  double kde_bandwidth_scale = 1.0;
  SummaryFn summary = SummaryFn::identity();
  ExactDensity::DensityFn exact;  // required for SurrogateKind::Exact
};

// Requires at least 10 * (param_dim + context_dim) rows for fitted variants.
std::unique_ptr<SurrogateLikelihood> fit_surrogate(const SyntheticDataset& data,
                                                   const SurrogateSettings& settings);

// --- Marginal likelihood and weights ---------------------------------------

// log( (1/B) sum_b p_phi(x_o | theta_b, c_o) ) with theta_b iid from the
// prior; -inf when every evaluation fails.
double marginal_loglik(const SurrogateLikelihood& surrogate, const std::vector<double>& x_o,
                       const std::vector<double>& c_o, const BoxPrior& theta_prior, int B,
                       RngStream& rng);

// Per-instance log marginals with one shared set of prior draws; this is the
// batched path the engine uses so KDE surrogates can reuse neighbor searches.
std::vector<double> marginal_logliks_shared(const SurrogateLikelihood& surrogate,
                                            const ObservedDataset& observed,
                                            const std::vector<std::vector<double>>& thetas,
                                            int parallelism = 1);

// (1/M) sum_j log p(x_o^j | m); -inf if any instance failed.
double geometric_mean_logweight(const std::vector<double>& per_instance_logmarg);

// softmax(log_geo_means / tau); tau = 1 recovers plain normalization.
std::vector<double> temperature_scaled_weights(const std::vector<double>& log_geo_means,
                                               double tau);

}  // namespace modelsmc

#endif  // MODELSMC_LIKELIHOOD_HPP
