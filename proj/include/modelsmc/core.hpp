#ifndef MODELSMC_CORE_HPP
#define MODELSMC_CORE_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "modelsmc/rng.hpp"

namespace modelsmc {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// --- Model representations -------------------------------------------------

// Index into a fixed, task-owned candidate pool.
struct PoolRef {
  std::size_t index = 0;
};

// Source text of a program in the numeric DSL (parsed lazily by the
// interpreter; keeping the text here keeps this header independent of the
// parser and makes run logs self-contained).
struct DslSource {
  std::string text;
};

// Subprocess simulator: one JSON object {"theta":[...],"context":[...],
// "seed":n} per line on stdin, one {"x":[...]} or {"error":"..."} per line
// on stdout. Disabled by default.
struct ExternalScript {
  std::string command;
  double timeout_s = 10.0;
};

using ModelRepresentation = std::variant<PoolRef, DslSource, ExternalScript>;

struct CandidateModel {
  std::string id;
  ModelRepresentation representation;
  int param_dim = 0;
  int context_dim = 0;
  int obs_dim = 0;
};

// --- Particles -------------------------------------------------------------

struct AncestryEntry {
  std::string model_id;
  std::string model_text;  // program source for DSL models, empty otherwise
  std::string feedback;
  double log_weight = kNegInf;
};

struct Particle {
  CandidateModel model;
  // Log geometric-mean marginal likelihood; kNegInf marks a failed particle
  // (it stays in the population with zero resampling mass, per the
  // corrective-feedback design, rather than being dropped).
  double log_weight = kNegInf;
  double norm_weight = 0.0;
  std::string feedback;
  std::string failure;  // captured diagnostics when log_weight is the sentinel
  std::vector<AncestryEntry> ancestry;
  // Id of the particle entry whose evaluation produced log_weight; clones
  // inherit it so provenance survives copying.
  std::string origin_id;
  // Chat tokens spent creating this particle (proposal retries + feedback);
  // zero for clones and pool draws.
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool failed() const { return log_weight == kNegInf; }
};

// Keep the most recent `depth` entries (suffix of the full chain).
inline void truncate_ancestry(std::vector<AncestryEntry>& chain, std::size_t depth) {
  if (chain.size() > depth) {
    chain.erase(chain.begin(), chain.end() - static_cast<std::ptrdiff_t>(depth));
  }
}

// --- Observed data ---------------------------------------------------------

struct ObservedInstance {
  std::vector<double> x;
  std::vector<double> context;
};

struct ObservedDataset {
  std::vector<ObservedInstance> pairs;

  std::size_t size() const { return pairs.size(); }
};

// --- Priors ----------------------------------------------------------------

// Independent uniform box over parameter dimensions.
class BoxPrior {
 public:
  BoxPrior() = default;
  BoxPrior(std::vector<double> lower, std::vector<double> upper)
      : lower_(std::move(lower)), upper_(std::move(upper)) {
    if (lower_.size() != upper_.size()) {
      throw std::invalid_argument("BoxPrior: bound dimension mismatch");
    }
    for (std::size_t d = 0; d < lower_.size(); ++d) {
      if (!(lower_[d] < upper_[d])) {
        throw std::invalid_argument("BoxPrior: lower must be < upper in every dimension");
      }
    }
  }

  std::size_t dim() const { return lower_.size(); }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }

  std::vector<double> sample(RngStream& rng) const {
    std::vector<double> theta(lower_.size());
    for (std::size_t d = 0; d < theta.size(); ++d) {
      theta[d] = rng.uniform(lower_[d], upper_[d]);
    }
    return theta;
  }

  bool contains(const std::vector<double>& theta) const {
    if (theta.size() != lower_.size()) return false;
    for (std::size_t d = 0; d < theta.size(); ++d) {
      if (theta[d] < lower_[d] || theta[d] > upper_[d]) return false;
    }
    return true;
  }

  double log_density(const std::vector<double>& theta) const {
    if (!contains(theta)) return kNegInf;
    double ld = 0.0;
    for (std::size_t d = 0; d < lower_.size(); ++d) {
      ld -= std::log(upper_[d] - lower_[d]);
    }
    return ld;
  }

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

// --- Run configuration -----------------------------------------------------

struct RunConfig {
  int n_particles = 50;
  int n_iterations = 20;
  double clone_prob = 0.7;
  double resample_temperature = 1.0;
  int mc_budget = 2000;      // B prior samples for the marginal estimate
  int n_sim = 1000;          // surrogate training set size
  std::uint64_t seed = 0;
  int parallelism = 1;
  int early_stop_patience = 10;
  int ancestry_depth = 5;
  double map_temperature = 1.0;  // reserved for posterior-surrogate MAP
  int map_samples = 10000;
  // Per-particle Bernoulli(alpha) clone split instead of the deterministic
  // floor(alpha*N) count.
  bool bernoulli_clones = false;

  void validate() const {
    if (n_particles < 1 || n_iterations < 1 || mc_budget < 1 || n_sim < 1 ||
        parallelism < 1 || early_stop_patience < 1 || ancestry_depth < 1 || map_samples < 1) {
      throw std::invalid_argument("RunConfig: counts must be >= 1");
    }
    if (clone_prob < 0.0 || clone_prob > 1.0) {
      throw std::invalid_argument("RunConfig: clone_prob must be in [0,1]");
    }
    if (!(resample_temperature > 0.0) || !(map_temperature > 0.0)) {
      throw std::invalid_argument("RunConfig: temperatures must be > 0");
    }
  }
};

// --- Log-weight arithmetic -------------------------------------------------

// log(sum(exp(v))) via the max shift; kNegInf entries contribute nothing.
double log_sum_exp(const std::vector<double>& log_values);

// Normalized weights from unnormalized log weights. Failed (-inf) entries map
// to exactly 0. Throws if every entry is -inf.
std::vector<double> normalize_log_weights(const std::vector<double>& log_weights);

}  // namespace modelsmc

#endif  // MODELSMC_CORE_HPP
