#ifndef MODELSMC_TASKS_HPP
#define MODELSMC_TASKS_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "modelsmc/task.hpp"

namespace modelsmc::tasks {

// --- GMM candidate pool -----------------------------------------------------
//
// Ten-dimensional Gaussian mixtures with external parameters theta = (s, u)
// where s is a scalar scale and u shifts four fixed components of the mean.
// The density is sum_i w_i N(x; s mu_i + u, s^2 Sigma_i).

inline constexpr int kGmmDim = 10;
inline constexpr int kGmmShiftSlots = 4;

struct GmmCandidate {
  int n_comp = 1;
  std::vector<double> weights;                 // simplex over components
  std::vector<Eigen::VectorXd> means;          // kGmmDim each
  std::vector<Eigen::MatrixXd> covariances;    // kGmmDim x kGmmDim, PSD
  std::vector<Eigen::MatrixXd> chol_lower;     // Cholesky factors of the above
  std::vector<double> log_det;                 // log det Sigma_i
  std::array<int, kGmmShiftSlots> shift_slots{};  // nonzero components of u

  // Expand theta = (s, u_active[4]) into the full ten-dimensional shift.
  Eigen::VectorXd expand_shift(const std::vector<double>& theta) const;
};

// n_comp ~ U{1..10}, normalized U[0,1] weights, mu ~ U[-5,5]^10, Sigma =
// alpha * S S^T with S entries U[-2,2] and alpha ~ U[1,2]; the four shift
// slots are a uniform subset of the ten indices. Same seed, same pool.
std::vector<GmmCandidate> build_gmm_pool(int n_models, RngStream& rng);

double gmm_logpdf(const GmmCandidate& cand, const Eigen::VectorXd& x, double s,
                  const Eigen::VectorXd& u);

std::vector<Eigen::VectorXd> gmm_sample(const GmmCandidate& cand, double s,
                                        const Eigen::VectorXd& u, int n, RngStream& rng);

struct GmmTaskSettings {
  int n_models = 20;
  int target_index = 0;
  int m_observed = 1000;
  std::uint64_t pool_seed = 0;  // pool is shared across runs, so seeded apart
  std::uint64_t data_seed = 0;
};

// Fixed-pool validation task; theta = (s, u1..u4) with prior
// [0.1,2] x [-2,2]^4, observed data drawn from the target at s=1, u=0.
Task make_gmm_task(const GmmTaskSettings& settings);

// Access the pool candidate behind a PoolRef model of a GMM task.
const GmmCandidate& gmm_pool_candidate(const Task& task, const CandidateModel& model);

// --- Stochastic SIR ---------------------------------------------------------

inline constexpr int kSirSteps = 60;  // plus the initial state: 61 per series

// Binomial-chain SIR; returns S, I, R series (t = 0..60) concatenated into a
// 183-dimensional vector of raw counts.
std::vector<double> sir_simulate(double beta, double gamma, const std::vector<double>& context,
                                 RngStream& rng);

// Divide every count (and the context) by N = S0+I0+R0.
std::vector<double> sir_normalize(const std::vector<double>& raw,
                                  const std::vector<double>& context);
std::vector<double> sir_normalize_context(const std::vector<double>& context);

struct SirTaskSettings {
  int m_observed = 100;
  std::uint64_t data_seed = 0;
  double true_beta = 0.8;
  double true_gamma = 0.2;
};

// DSL-driven discovery task: candidates are DSL programs over the raw
// context (S0, I0, R0) emitting 183 raw counts which the task normalizes.
// theta = (beta, gamma) with prior [0,2] x [0,1]. The initial model holds
// all populations constant.
Task make_sir_task(const SirTaskSettings& settings);

// Ground-truth SIR dynamics expressed in the DSL (used by tests and the
// mock-LLM experiment).
const std::string& sir_ground_truth_program();

// --- Conjugate Gaussian oracle ----------------------------------------------

struct ConjugateTaskSettings {
  int m_observed = 1;
  std::uint64_t data_seed = 0;
  double true_theta = 0.0;
};

// One-dimensional N(x; theta, 1) likelihood with box prior theta in [-6,6];
// marginals have a cheap quadrature reference, which makes this the fixture
// for Monte Carlo accuracy tests.
Task make_conjugate_task(const ConjugateTaskSettings& settings);

// log p(x_o) = log integral over the box of the uniform prior times
// N(x_o; theta, 1), by trapezoid quadrature.
double conjugate_marginal_quadrature(double x_o, int n_points = 1000001);

}  // namespace modelsmc::tasks

#endif  // MODELSMC_TASKS_HPP
