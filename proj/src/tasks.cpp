#include "modelsmc/tasks.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "modelsmc/dsl.hpp"

namespace modelsmc {

// --- Observed dataset CSV ---------------------------------------------------

void write_observed_csv(const std::string& path, const ObservedDataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  if (data.pairs.empty()) throw std::invalid_argument("write_observed_csv: empty dataset");
  out.precision(17);
  const auto& first = data.pairs.front();
  for (std::size_t i = 0; i < first.context.size(); ++i) {
    if (i) out << ",";
    out << "c" << i;
  }
  for (std::size_t i = 0; i < first.x.size(); ++i) {
    if (i || !first.context.empty()) out << ",";
    out << "x" << i;
  }
  out << "\n";
  for (const auto& pair : data.pairs) {
    bool sep = false;
    for (double v : pair.context) {
      if (sep) out << ",";
      out << v;
      sep = true;
    }
    for (double v : pair.x) {
      if (sep) out << ",";
      out << v;
      sep = true;
    }
    out << "\n";
  }
}

ObservedDataset read_observed_csv(const std::string& path, int context_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  ObservedDataset data;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty observed CSV");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ObservedInstance inst;
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      const double v = std::stod(cell);
      if (!std::isfinite(v)) throw std::runtime_error("non-finite value in observed CSV");
      if (col < context_dim) {
        inst.context.push_back(v);
      } else {
        inst.x.push_back(v);
      }
      ++col;
    }
    if (!data.pairs.empty() &&
        (inst.x.size() != data.pairs.front().x.size() ||
         inst.context.size() != data.pairs.front().context.size())) {
      throw std::runtime_error("inconsistent row width in observed CSV");
    }
    data.pairs.push_back(std::move(inst));
  }
  if (data.pairs.empty()) throw std::runtime_error("observed CSV has no data rows");
  return data;
}

}  // namespace modelsmc

namespace modelsmc::tasks {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

// --- GMM --------------------------------------------------------------------

Eigen::VectorXd GmmCandidate::expand_shift(const std::vector<double>& theta) const {
  Eigen::VectorXd u = Eigen::VectorXd::Zero(kGmmDim);
  for (int j = 0; j < kGmmShiftSlots; ++j) {
    u[shift_slots[static_cast<std::size_t>(j)]] = theta[static_cast<std::size_t>(j + 1)];
  }
  return u;
}

std::vector<GmmCandidate> build_gmm_pool(int n_models, RngStream& rng) {
  if (n_models < 1) throw std::invalid_argument("build_gmm_pool: n_models must be >= 1");
  std::vector<GmmCandidate> pool;
  pool.reserve(static_cast<std::size_t>(n_models));
  for (int m = 0; m < n_models; ++m) {
    GmmCandidate cand;
    cand.n_comp = static_cast<int>(rng.uniform_int(1, 10));
    cand.weights.resize(static_cast<std::size_t>(cand.n_comp));
    double total = 0.0;
    for (auto& w : cand.weights) {
      w = rng.uniform();
      total += w;
    }
    for (auto& w : cand.weights) w /= total;
    for (int i = 0; i < cand.n_comp; ++i) {
      Eigen::VectorXd mu(kGmmDim);
      for (int j = 0; j < kGmmDim; ++j) mu[j] = rng.uniform(-5.0, 5.0);
      Eigen::MatrixXd shape(kGmmDim, kGmmDim);
      for (int r = 0; r < kGmmDim; ++r) {
        for (int c = 0; c < kGmmDim; ++c) shape(r, c) = rng.uniform(-2.0, 2.0);
      }
      const double alpha = rng.uniform(1.0, 2.0);
      Eigen::MatrixXd sigma = alpha * shape * shape.transpose();

      Eigen::LLT<Eigen::MatrixXd> llt(sigma);
      if (llt.info() != Eigen::Success) {
        sigma += 1e-9 * Eigen::MatrixXd::Identity(kGmmDim, kGmmDim);
        llt.compute(sigma);
        if (llt.info() != Eigen::Success) {
          throw std::runtime_error("build_gmm_pool: covariance not positive definite");
        }
      }
      const Eigen::MatrixXd lower = llt.matrixL();
      cand.means.push_back(std::move(mu));
      cand.covariances.push_back(std::move(sigma));
      cand.log_det.push_back(2.0 * lower.diagonal().array().log().sum());
      cand.chol_lower.push_back(lower);
    }
    const auto slots = rng.subset(kGmmDim, kGmmShiftSlots);
    for (int j = 0; j < kGmmShiftSlots; ++j) {
      cand.shift_slots[static_cast<std::size_t>(j)] = static_cast<int>(slots[static_cast<std::size_t>(j)]);
    }
    pool.push_back(std::move(cand));
  }
  return pool;
}

double gmm_logpdf(const GmmCandidate& cand, const Eigen::VectorXd& x, double s,
                  const Eigen::VectorXd& u) {
  if (!(s > 0.0)) throw std::invalid_argument("gmm_logpdf: scale must be > 0");
  const double log_s2 = 2.0 * std::log(s);
  double best = kNegInf;
  std::vector<double> comp_logs(static_cast<std::size_t>(cand.n_comp));
  for (int i = 0; i < cand.n_comp; ++i) {
    const Eigen::VectorXd centered = x - s * cand.means[static_cast<std::size_t>(i)] - u;
    const Eigen::VectorXd y = cand.chol_lower[static_cast<std::size_t>(i)]
                                  .triangularView<Eigen::Lower>()
                                  .solve(centered);
    const double quad = y.squaredNorm() / (s * s);
    const double lp = std::log(cand.weights[static_cast<std::size_t>(i)]) -
                      0.5 * (kGmmDim * kLog2Pi + kGmmDim * log_s2 +
                             cand.log_det[static_cast<std::size_t>(i)] + quad);
    comp_logs[static_cast<std::size_t>(i)] = lp;
    best = std::max(best, lp);
  }
  if (best == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double lp : comp_logs) acc += std::exp(lp - best);
  return best + std::log(acc);
}

std::vector<Eigen::VectorXd> gmm_sample(const GmmCandidate& cand, double s,
                                        const Eigen::VectorXd& u, int n, RngStream& rng) {
  if (!(s > 0.0)) throw std::invalid_argument("gmm_sample: scale must be > 0");
  std::vector<Eigen::VectorXd> draws;
  draws.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double z = rng.uniform();
    double acc = 0.0;
    int comp = cand.n_comp - 1;
    for (int i = 0; i < cand.n_comp; ++i) {
      acc += cand.weights[static_cast<std::size_t>(i)];
      if (z < acc) {
        comp = i;
        break;
      }
    }
    Eigen::VectorXd std_normal(kGmmDim);
    for (int j = 0; j < kGmmDim; ++j) std_normal[j] = rng.normal();
    draws.push_back(s * cand.means[static_cast<std::size_t>(comp)] + u +
                    s * (cand.chol_lower[static_cast<std::size_t>(comp)] * std_normal));
  }
  return draws;
}

Task make_gmm_task(const GmmTaskSettings& settings) {
  RngStream pool_rng = RngStream(settings.pool_seed).derive(0, 0, "gmmpool");
  auto pool = std::make_shared<std::vector<GmmCandidate>>(
      build_gmm_pool(settings.n_models, pool_rng));
  if (settings.target_index < 0 || settings.target_index >= settings.n_models) {
    throw std::invalid_argument("make_gmm_task: target_index out of range");
  }

  Task task;
  task.name = "gmm";
  task.backing = pool;
  task.theta_prior = BoxPrior({0.1, -2.0, -2.0, -2.0, -2.0}, {2.0, 2.0, 2.0, 2.0, 2.0});

  RngStream data_rng = RngStream(settings.data_seed).derive(0, 0, "gmmdata");
  const auto& target = (*pool)[static_cast<std::size_t>(settings.target_index)];
  const auto samples = gmm_sample(target, 1.0, Eigen::VectorXd::Zero(kGmmDim),
                                  settings.m_observed, data_rng);
  for (const auto& x : samples) {
    task.observed.pairs.push_back({to_std(x), {}});
  }

  for (int i = 0; i < settings.n_models; ++i) {
    CandidateModel model;
    model.id = "gmm_pool_" + std::to_string(i);
    model.representation = PoolRef{static_cast<std::size_t>(i)};
    model.param_dim = 1 + kGmmShiftSlots;
    model.context_dim = 0;
    model.obs_dim = kGmmDim;
    task.pool.push_back(std::move(model));
  }
  task.initial_model = task.pool.front();

  task.simulate = [pool](const CandidateModel& model, const std::vector<double>& theta,
                         const std::vector<double>& /*context*/, RngStream& rng) {
    SimOutcome out;
    const auto* ref = std::get_if<PoolRef>(&model.representation);
    if (ref == nullptr || ref->index >= pool->size()) {
      out.error = "model is not a member of the GMM pool";
      return out;
    }
    const auto& cand = (*pool)[ref->index];
    const double s = theta[0];
    if (!(s > 0.0)) {
      out.error = "scale parameter must be positive";
      return out;
    }
    const auto draw = gmm_sample(cand, s, cand.expand_shift(theta), 1, rng);
    out.x = to_std(draw.front());
    out.ok = true;
    return out;
  };

  task.exact_logpdf_for = [pool](const CandidateModel& model) -> ExactDensity::DensityFn {
    const auto* ref = std::get_if<PoolRef>(&model.representation);
    if (ref == nullptr || ref->index >= pool->size()) {
      throw std::invalid_argument("exact GMM density requested for a non-pool model");
    }
    const std::size_t index = ref->index;
    return [pool, index](const std::vector<double>& x, const std::vector<double>& theta,
                         const std::vector<double>& /*context*/) {
      const auto& cand = (*pool)[index];
      const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<int>(x.size()));
      return gmm_logpdf(cand, xv, theta[0], cand.expand_shift(theta));
    };
  };
  return task;
}

const GmmCandidate& gmm_pool_candidate(const Task& task, const CandidateModel& model) {
  const auto pool = std::static_pointer_cast<std::vector<GmmCandidate>>(task.backing);
  const auto* ref = std::get_if<PoolRef>(&model.representation);
  if (!pool || ref == nullptr || ref->index >= pool->size()) {
    throw std::invalid_argument("gmm_pool_candidate: not a GMM pool model");
  }
  return (*pool)[ref->index];
}

// --- SIR --------------------------------------------------------------------

std::vector<double> sir_simulate(double beta, double gamma, const std::vector<double>& context,
                                 RngStream& rng) {
  if (context.size() != 3) throw std::invalid_argument("sir_simulate: context must be (S0,I0,R0)");
  std::int64_t s = static_cast<std::int64_t>(std::llround(context[0]));
  std::int64_t i = static_cast<std::int64_t>(std::llround(context[1]));
  std::int64_t r = static_cast<std::int64_t>(std::llround(context[2]));
  if (s < 0 || i < 0 || r < 0) throw std::invalid_argument("sir_simulate: negative counts");
  const double n = static_cast<double>(s + i + r);
  if (!(n > 0.0)) throw std::invalid_argument("sir_simulate: empty population");

  std::vector<double> series_s{static_cast<double>(s)};
  std::vector<double> series_i{static_cast<double>(i)};
  std::vector<double> series_r{static_cast<double>(r)};
  for (int t = 1; t <= kSirSteps; ++t) {
    const double p_inf = 1.0 - std::exp(-beta * static_cast<double>(i) / n);
    const std::int64_t n_inf = rng.binomial(s, p_inf);
    const std::int64_t n_rec = rng.binomial(i, gamma);
    s -= n_inf;
    i += n_inf - n_rec;
    r += n_rec;
    series_s.push_back(static_cast<double>(s));
    series_i.push_back(static_cast<double>(i));
    series_r.push_back(static_cast<double>(r));
  }
  std::vector<double> out;
  out.reserve(3 * (kSirSteps + 1));
  out.insert(out.end(), series_s.begin(), series_s.end());
  out.insert(out.end(), series_i.begin(), series_i.end());
  out.insert(out.end(), series_r.begin(), series_r.end());
  return out;
}

std::vector<double> sir_normalize(const std::vector<double>& raw,
                                  const std::vector<double>& context) {
  const double n = std::accumulate(context.begin(), context.end(), 0.0);
  if (!(n > 0.0)) throw std::invalid_argument("sir_normalize: total population is zero");
  std::vector<double> out(raw.size());
  for (std::size_t k = 0; k < raw.size(); ++k) out[k] = raw[k] / n;
  return out;
}

std::vector<double> sir_normalize_context(const std::vector<double>& context) {
  return sir_normalize(context, context);
}

const std::string& sir_ground_truth_program() {
  // clamp(t-1, 0, 1) freezes the first step so the emitted series includes
  // the initial state, matching the native simulator's 61-step layout.
  static const std::string text =
      "let S = c0\n"
      "let I = c1\n"
      "let R = c2\n"
      "let NPOP = c0 + c1 + c2\n"
      "let NINF = 0\n"
      "let NREC = 0\n"
      "step NINF = binom(S, (1 - exp(-th0 * I / NPOP)) * clamp(t - 1, 0, 1))\n"
      "step NREC = binom(I, th1 * clamp(t - 1, 0, 1))\n"
      "step S = S - NINF\n"
      "step I = I + NINF - NREC\n"
      "step R = R + NREC\n"
      "output S, I, R horizon 61\n";
  return text;
}

Task make_sir_task(const SirTaskSettings& settings) {
  Task task;
  task.name = "sir";
  task.theta_prior = BoxPrior({0.0, 0.0}, {2.0, 1.0});  // (beta, gamma)
  task.context_map = sir_normalize_context;

  task.context_sampler = [](RngStream& rng) {
    return std::vector<double>{static_cast<double>(rng.uniform_int(50, 100)),
                               static_cast<double>(rng.uniform_int(1, 5)), 0.0};
  };

  RngStream data_rng = RngStream(settings.data_seed).derive(0, 0, "sirdata");
  for (int j = 0; j < settings.m_observed; ++j) {
    RngStream row_rng = data_rng.derive(0, static_cast<std::uint64_t>(j), "obs");
    const std::vector<double> context = task.context_sampler(row_rng);
    const std::vector<double> raw =
        sir_simulate(settings.true_beta, settings.true_gamma, context, row_rng);
    task.observed.pairs.push_back({sir_normalize(raw, context), context});
  }

  const int obs_dim = 3 * (kSirSteps + 1);
  CandidateModel initial;
  initial.id = "sir_constant";
  initial.representation = DslSource{
      "let S = c0\nlet I = c1\nlet R = c2\noutput S, I, R horizon 61\n"};
  initial.param_dim = 2;
  initial.context_dim = 3;
  initial.obs_dim = obs_dim;
  task.initial_model = initial;

  task.simulate = [obs_dim](const CandidateModel& model, const std::vector<double>& theta,
                            const std::vector<double>& context, RngStream& rng) {
    SimOutcome out;
    const auto* src = std::get_if<DslSource>(&model.representation);
    if (src == nullptr) {
      out.error = "SIR task models must be DSL programs";
      return out;
    }
    dsl::DslProgram prog;
    try {
      prog = dsl::parse(src->text);
    } catch (const std::exception& e) {
      out.error = std::string("parse error: ") + e.what();
      return out;
    }
    dsl::SimResult sim = dsl::simulate(prog, theta, context, rng);
    if (!sim.ok) {
      out.error = sim.error;
      return out;
    }
    if (static_cast<int>(sim.x.size()) != obs_dim) {
      out.error = "output dimension mismatch: got " + std::to_string(sim.x.size()) +
                  ", expected " + std::to_string(obs_dim);
      return out;
    }
    out.x = sir_normalize(sim.x, context);
    out.ok = true;
    return out;
  };
  return task;
}

// --- Conjugate Gaussian oracle ----------------------------------------------

Task make_conjugate_task(const ConjugateTaskSettings& settings) {
  Task task;
  task.name = "conjugate";
  task.theta_prior = BoxPrior({-6.0}, {6.0});

  RngStream data_rng = RngStream(settings.data_seed).derive(0, 0, "conjdata");
  for (int j = 0; j < settings.m_observed; ++j) {
    task.observed.pairs.push_back({{settings.true_theta + data_rng.normal()}, {}});
  }

  CandidateModel model;
  model.id = "conjugate_gaussian";
  model.representation = DslSource{"let X = th0 + normal(0, 1)\nstep X = X\noutput X horizon 1\n"};
  model.param_dim = 1;
  model.context_dim = 0;
  model.obs_dim = 1;
  task.initial_model = model;

  task.simulate = [](const CandidateModel&, const std::vector<double>& theta,
                     const std::vector<double>&, RngStream& rng) {
    SimOutcome out;
    out.x = {theta[0] + rng.normal()};
    out.ok = true;
    return out;
  };

  task.exact_logpdf_for = [](const CandidateModel&) -> ExactDensity::DensityFn {
    return [](const std::vector<double>& x, const std::vector<double>& theta,
              const std::vector<double>&) {
      const double r = x[0] - theta[0];
      return -0.5 * kLog2Pi - 0.5 * r * r;
    };
  };
  return task;
}

double conjugate_marginal_quadrature(double x_o, int n_points) {
  const double lo = -6.0, hi = 6.0;
  const double h = (hi - lo) / static_cast<double>(n_points - 1);
  auto integrand = [&](double theta) {
    const double r = x_o - theta;
    return std::exp(-0.5 * kLog2Pi - 0.5 * r * r) / (hi - lo);
  };
  double acc = 0.5 * (integrand(lo) + integrand(hi));
  for (int i = 1; i < n_points - 1; ++i) {
    acc += integrand(lo + h * static_cast<double>(i));
  }
  return std::log(acc * h);
}

}  // namespace modelsmc::tasks
