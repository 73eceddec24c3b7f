#include "modelsmc/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <stdexcept>

namespace modelsmc {

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log(sqrt(2*pi))

Eigen::VectorXd feature_vector(const std::vector<double>& theta,
                               const std::vector<double>& context) {
  Eigen::VectorXd f(theta.size() + context.size());
  for (std::size_t i = 0; i < theta.size(); ++i) f[static_cast<int>(i)] = theta[i];
  for (std::size_t i = 0; i < context.size(); ++i) {
    f[static_cast<int>(theta.size() + i)] = context[i];
  }
  return f;
}

void track_range(std::vector<double>& lo, std::vector<double>& hi,
                 const Eigen::MatrixXd& obs) {
  lo.assign(static_cast<std::size_t>(obs.cols()), 0.0);
  hi.assign(static_cast<std::size_t>(obs.cols()), 0.0);
  for (int d = 0; d < obs.cols(); ++d) {
    lo[static_cast<std::size_t>(d)] = obs.col(d).minCoeff();
    hi[static_cast<std::size_t>(d)] = obs.col(d).maxCoeff();
  }
}

template <class Fn>
void parallel_for(std::size_t n, int parallelism, Fn&& fn) {
  if (parallelism <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(parallelism), n);
  std::vector<std::future<void>> futures;
  futures.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += n_workers) fn(i);
    }));
  }
  for (auto& f : futures) f.get();
}

}  // namespace

// --- SummaryFn --------------------------------------------------------------

SummaryFn SummaryFn::identity() {
  return SummaryFn("identity", [](const std::vector<double>& x) { return x; });
}

SummaryFn SummaryFn::mean_std() {
  return SummaryFn("mean_std", [](const std::vector<double>& x) {
    if (x.empty()) throw std::invalid_argument("mean_std summary: empty observation");
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(x.size()));
    return std::vector<double>{mean, sd};
  });
}

// --- Training data ----------------------------------------------------------

SyntheticDataset build_training_set(const CandidateModel& model, const SimulateFn& simulate,
                                    const BoxPrior& theta_prior,
                                    const ContextSampler& context_sampler, int n_sim,
                                    const RngStream& rng) {
  if (n_sim < 1) throw std::invalid_argument("build_training_set: n_sim must be >= 1");
  SyntheticDataset data;
  data.param_dim = static_cast<int>(theta_prior.dim());
  data.rows.reserve(static_cast<std::size_t>(n_sim));
  int failures = 0;
  for (int i = 0; i < n_sim; ++i) {
    RngStream row_rng = rng.derive(0, static_cast<std::uint64_t>(i), "trainrow");
    SyntheticRow row;
    row.theta = theta_prior.sample(row_rng);
    row.context = context_sampler ? context_sampler(row_rng) : std::vector<double>{};
    SimOutcome out = simulate(model, row.theta, row.context, row_rng);
    bool finite = out.ok;
    for (double v : out.x) finite = finite && std::isfinite(v);
    if (!finite) {
      ++failures;
      if (data.first_failure.empty()) {
        data.first_failure = out.error.empty() ? "non-finite simulator output" : out.error;
      }
      continue;
    }
    row.x = std::move(out.x);
    data.context_dim = static_cast<int>(row.context.size());
    data.obs_dim = static_cast<int>(row.x.size());
    data.rows.push_back(std::move(row));
  }
  data.failure_fraction = static_cast<double>(failures) / static_cast<double>(n_sim);
  if (data.failure_fraction > 0.5) {
    throw std::runtime_error("simulation failure fraction " +
                             std::to_string(data.failure_fraction) +
                             (data.first_failure.empty() ? "" : ": " + data.first_failure));
  }
  return data;
}

SyntheticDataset apply_summary(const SummaryFn& s, const SyntheticDataset& data) {
  if (s.is_identity()) return data;
  SyntheticDataset out = data;
  for (auto& row : out.rows) row.x = s(row.x);
  out.obs_dim = out.rows.empty() ? 0 : static_cast<int>(out.rows.front().x.size());
  return out;
}

ObservedDataset apply_summary(const SummaryFn& s, const ObservedDataset& data) {
  if (s.is_identity()) return data;
  ObservedDataset out = data;
  for (auto& pair : out.pairs) pair.x = s(pair.x);
  return out;
}

// --- SurrogateLikelihood base ----------------------------------------------

std::vector<double> SurrogateLikelihood::log_pdf_batch(
    const std::vector<std::vector<double>>& xs, const std::vector<std::vector<double>>& contexts,
    const std::vector<double>& theta) const {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = log_pdf(xs[i], theta, contexts[i]);
  return out;
}

// --- ConditionalGaussian ----------------------------------------------------

ConditionalGaussian::ConditionalGaussian(const SyntheticDataset& data, double variance_floor) {
  const int n = static_cast<int>(data.rows.size());
  if (n < 2) throw std::invalid_argument("ConditionalGaussian: need at least 2 rows");
  n_features_ = data.param_dim + data.context_dim;
  const int p = n_features_ + 1;  // intercept
  Eigen::MatrixXd design(n, p);
  Eigen::MatrixXd targets(n, data.obs_dim);
  for (int i = 0; i < n; ++i) {
    design.row(i).head(n_features_) =
        feature_vector(data.rows[static_cast<std::size_t>(i)].theta,
                       data.rows[static_cast<std::size_t>(i)].context)
            .transpose();
    design(i, p - 1) = 1.0;
    for (int d = 0; d < data.obs_dim; ++d) {
      targets(i, d) = data.rows[static_cast<std::size_t>(i)].x[static_cast<std::size_t>(d)];
    }
  }
  const Eigen::MatrixXd beta = design.colPivHouseholderQr().solve(targets);  // p x obs_dim
  coef_ = beta.transpose();
  const Eigen::MatrixXd residuals = targets - design * beta;
  variance_.resize(data.obs_dim);
  const double dof = std::max(1, n - p);
  for (int d = 0; d < data.obs_dim; ++d) {
    double v = residuals.col(d).squaredNorm() / dof;
    if (v < variance_floor) {
      v = variance_floor;
      floored_ = true;
    }
    variance_[d] = v;
  }
  track_range(x_min_, x_max_, targets);
}

double ConditionalGaussian::log_pdf(const std::vector<double>& x,
                                    const std::vector<double>& theta,
                                    const std::vector<double>& context) const {
  if (static_cast<int>(theta.size() + context.size()) != n_features_ ||
      static_cast<int>(x.size()) != coef_.rows()) {
    throw std::invalid_argument("ConditionalGaussian: dimension mismatch");
  }
  Eigen::VectorXd f(n_features_ + 1);
  f.head(n_features_) = feature_vector(theta, context);
  f[n_features_] = 1.0;
  const Eigen::VectorXd pred = coef_ * f;
  double lp = 0.0;
  for (int d = 0; d < pred.size(); ++d) {
    const double r = x[static_cast<std::size_t>(d)] - pred[d];
    lp += -kLogSqrt2Pi - 0.5 * std::log(variance_[d]) - 0.5 * r * r / variance_[d];
  }
  return lp;
}

// --- ConditionalKde ---------------------------------------------------------

ConditionalKde::ConditionalKde(const SyntheticDataset& data, int k_neighbors,
                               double bandwidth_scale, double variance_floor)
    : k_(k_neighbors), bandwidth_scale_(bandwidth_scale), variance_floor_(variance_floor) {
  const int n = static_cast<int>(data.rows.size());
  if (n < 2) throw std::invalid_argument("ConditionalKde: need at least 2 rows");
  k_ = std::min(k_, n);
  const int feat_dim = data.param_dim + data.context_dim;
  features_.resize(n, std::max(feat_dim, 1));
  obs_.resize(n, data.obs_dim);
  for (int i = 0; i < n; ++i) {
    const auto& row = data.rows[static_cast<std::size_t>(i)];
    if (feat_dim > 0) {
      features_.row(i) = feature_vector(row.theta, row.context).transpose();
    } else {
      features_(i, 0) = 0.0;
    }
    for (int d = 0; d < data.obs_dim; ++d) {
      obs_(i, d) = row.x[static_cast<std::size_t>(d)];
    }
  }
  feat_mean_ = features_.colwise().mean().array();
  Eigen::ArrayXd var = (features_.rowwise() - feat_mean_.matrix().transpose())
                           .array()
                           .square()
                           .colwise()
                           .mean();
  feat_inv_sd_ = (var.sqrt() + 1e-12).inverse();
  features_ = ((features_.rowwise() - feat_mean_.matrix().transpose()).array().rowwise() *
               feat_inv_sd_.transpose())
                  .matrix();
  Eigen::ArrayXd obs_mean = obs_.colwise().mean().array();
  global_obs_sd_ =
      ((obs_.rowwise() - obs_mean.matrix().transpose()).array().square().colwise().mean())
          .sqrt();
  track_range(x_min_, x_max_, obs_);
}

ConditionalKde::Slice ConditionalKde::condition(const std::vector<double>& theta,
                                                const std::vector<double>& context) const {
  Eigen::VectorXd q;
  if (features_.cols() == 1 && theta.empty() && context.empty()) {
    q = Eigen::VectorXd::Zero(1);
  } else {
    q = feature_vector(theta, context);
    if (q.size() != features_.cols()) {
      throw std::invalid_argument("ConditionalKde: feature dimension mismatch");
    }
    q = ((q.array() - feat_mean_) * feat_inv_sd_).matrix();
  }

  const int n = static_cast<int>(features_.rows());
  Eigen::VectorXd dist2 = (features_.rowwise() - q.transpose()).rowwise().squaredNorm();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::nth_element(order.begin(), order.begin() + (k_ - 1), order.end(),
                   [&](int a, int b) { return dist2[a] < dist2[b]; });

  Slice slice;
  slice.centers.resize(k_, obs_.cols());
  for (int i = 0; i < k_; ++i) {
    slice.centers.row(i) = obs_.row(order[static_cast<std::size_t>(i)]);
  }
  // Scott's rule on the neighbor set, per output dimension, with floors
  // against degenerate neighborhoods.
  const double d_out = static_cast<double>(obs_.cols());
  const double scott = std::pow(static_cast<double>(k_), -1.0 / (d_out + 4.0));
  Eigen::ArrayXd mean = slice.centers.colwise().mean().array();
  Eigen::ArrayXd sd = ((slice.centers.rowwise() - mean.matrix().transpose())
                           .array()
                           .square()
                           .colwise()
                           .mean())
                          .sqrt();
  slice.inv_bandwidth.resize(obs_.cols());
  slice.log_norm = -std::log(static_cast<double>(k_));
  for (int d = 0; d < obs_.cols(); ++d) {
    double h = bandwidth_scale_ * scott * sd[d];
    const double floor = std::max(std::sqrt(variance_floor_), 1e-3 * global_obs_sd_[d]);
    if (h < floor) {
      h = floor;
      floored_ = true;
    }
    slice.inv_bandwidth[d] = 1.0 / h;
    slice.log_norm -= std::log(h) + kLogSqrt2Pi;
  }
  return slice;
}

double ConditionalKde::eval_slice(const Slice& slice, const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != obs_.cols()) {
    throw std::invalid_argument("ConditionalKde: observation dimension mismatch");
  }
  Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<int>(x.size()));
  const Eigen::ArrayXXd z = ((slice.centers.rowwise() - xv.transpose()).array().rowwise() *
                             slice.inv_bandwidth.transpose());
  const Eigen::ArrayXd neg_half_d2 = -0.5 * z.square().rowwise().sum();
  const double m = neg_half_d2.maxCoeff();
  const double lse = m + std::log((neg_half_d2 - m).exp().sum());
  return slice.log_norm + lse;
}

double ConditionalKde::log_pdf(const std::vector<double>& x, const std::vector<double>& theta,
                               const std::vector<double>& context) const {
  return eval_slice(condition(theta, context), x);
}

std::vector<double> ConditionalKde::log_pdf_batch(
    const std::vector<std::vector<double>>& xs, const std::vector<std::vector<double>>& contexts,
    const std::vector<double>& theta) const {
  bool shared_context = true;
  for (std::size_t i = 1; i < contexts.size(); ++i) {
    shared_context = shared_context && contexts[i] == contexts[0];
  }
  std::vector<double> out(xs.size());
  if (shared_context && !xs.empty()) {
    const Slice slice = condition(theta, contexts[0]);
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = eval_slice(slice, xs[i]);
  } else {
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = log_pdf(xs[i], theta, contexts[i]);
  }
  return out;
}

// --- fit_surrogate ----------------------------------------------------------

std::unique_ptr<SurrogateLikelihood> fit_surrogate(const SyntheticDataset& data,
                                                   const SurrogateSettings& settings) {
  if (settings.kind == SurrogateKind::Exact) {
    if (!settings.exact) {
      throw std::invalid_argument("fit_surrogate: Exact variant requires a density function");
    }
    return std::make_unique<ExactDensity>(settings.exact);
  }
  const int min_rows = 10 * (data.param_dim + data.context_dim);
  if (static_cast<int>(data.rows.size()) < min_rows) {
    throw std::invalid_argument("fit_surrogate: dataset smaller than 10x input dimension");
  }
  if (settings.kind == SurrogateKind::ConditionalGaussian) {
    return std::make_unique<ConditionalGaussian>(data, settings.variance_floor);
  }
  return std::make_unique<ConditionalKde>(data, settings.knn, settings.kde_bandwidth_scale,
                                          settings.variance_floor);
}

// --- Marginal likelihood ----------------------------------------------------

double marginal_loglik(const SurrogateLikelihood& surrogate, const std::vector<double>& x_o,
                       const std::vector<double>& c_o, const BoxPrior& theta_prior, int B,
                       RngStream& rng) {
  if (B < 1) throw std::invalid_argument("marginal_loglik: B must be >= 1");
  std::vector<double> terms(static_cast<std::size_t>(B), kNegInf);
  for (int b = 0; b < B; ++b) {
    const std::vector<double> theta = theta_prior.sample(rng);
    const double lp = surrogate.log_pdf(x_o, theta, c_o);
    if (!std::isnan(lp)) terms[static_cast<std::size_t>(b)] = lp;
  }
  const double lse = log_sum_exp(terms);
  if (lse == kNegInf) return kNegInf;
  return lse - std::log(static_cast<double>(B));
}

std::vector<double> marginal_logliks_shared(const SurrogateLikelihood& surrogate,
                                            const ObservedDataset& observed,
                                            const std::vector<std::vector<double>>& thetas,
                                            int parallelism) {
  const std::size_t m = observed.size();
  const std::size_t B = thetas.size();
  if (B == 0) throw std::invalid_argument("marginal_logliks_shared: no prior draws");
  std::vector<std::vector<double>> xs(m), cs(m);
  for (std::size_t j = 0; j < m; ++j) {
    xs[j] = observed.pairs[j].x;
    cs[j] = observed.pairs[j].context;
  }
  // terms[j][b] = log p_phi(x_o^j | theta_b, c_o^j)
  std::vector<std::vector<double>> terms(m, std::vector<double>(B, kNegInf));
  parallel_for(B, parallelism, [&](std::size_t b) {
    const std::vector<double> batch = surrogate.log_pdf_batch(xs, cs, thetas[b]);
    for (std::size_t j = 0; j < m; ++j) {
      if (!std::isnan(batch[j])) terms[j][b] = batch[j];
    }
  });
  std::vector<double> out(m);
  const double log_b = std::log(static_cast<double>(B));
  for (std::size_t j = 0; j < m; ++j) {
    const double lse = log_sum_exp(terms[j]);
    out[j] = lse == kNegInf ? kNegInf : lse - log_b;
  }
  return out;
}

double geometric_mean_logweight(const std::vector<double>& per_instance_logmarg) {
  if (per_instance_logmarg.empty()) {
    throw std::invalid_argument("geometric_mean_logweight: empty input");
  }
  double acc = 0.0;
  for (double v : per_instance_logmarg) {
    if (v == kNegInf) return kNegInf;
    acc += v;
  }
  return acc / static_cast<double>(per_instance_logmarg.size());
}

std::vector<double> temperature_scaled_weights(const std::vector<double>& log_geo_means,
                                               double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature_scaled_weights: tau must be > 0");
  std::vector<double> scaled(log_geo_means.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    scaled[i] = log_geo_means[i] == kNegInf ? kNegInf : log_geo_means[i] / tau;
  }
  return normalize_log_weights(scaled);
}

}  // namespace modelsmc
