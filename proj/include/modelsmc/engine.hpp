#ifndef MODELSMC_ENGINE_HPP
#define MODELSMC_ENGINE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "modelsmc/core.hpp"
#include "modelsmc/likelihood.hpp"
#include "modelsmc/proposal.hpp"
#include "modelsmc/task.hpp"

namespace modelsmc {

// One logged particle evaluation. Iteration 0 holds the initial model (LLM
// runs); iteration 1 holds the exhaustive pool weighting (fixed-pool runs).
struct ParticleEntry {
  int iteration = 0;
  int slot = 0;
  std::string particle_id;  // "i<iteration>p<slot>"
  std::string parent_id;    // previous-iteration entry this one descends from
  std::string origin_id;    // entry whose evaluation produced log_weight
  std::string model_id;
  std::string model_text;   // program source for DSL models
  std::uint64_t model_hash = 0;
  double log_weight = kNegInf;
  double norm_weight = 0.0;
  bool clone = false;
  std::string failure;
  std::string feedback;
  std::int64_t prompt_tokens = 0;      // delta attributed to this entry
  std::int64_t completion_tokens = 0;
};

struct IterationRecord {
  int iteration = 0;
  std::vector<ParticleEntry> entries;
};

struct RunRecord {
  std::string method;  // "modelsmc" | "single_particle" | "funsearch"
  std::string task_name;
  std::uint64_t seed = 0;
  RunConfig config;
  std::vector<IterationRecord> iterations;
  std::vector<Particle> final_population;
  std::int64_t total_prompt_tokens = 0;
  std::int64_t total_completion_tokens = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct BestParticle {
  std::string particle_id;
  std::string origin_id;
  std::string model_id;
  std::string model_text;
  double log_weight = kNegInf;
  int iteration = 0;
  int slot = 0;
};

// Highest log geometric-mean marginal over all logged entries; ties broken
// by earliest (iteration, slot). Clones resolve to their origin entry's id.
BestParticle best_particle(const RunRecord& record);

// Stable hash of the model representation, for replay comparison.
std::uint64_t model_hash(const CandidateModel& model);

struct EngineOptions {
  SurrogateSettings likelihood;
  // Invoked after each completed iteration (crash-resume granularity).
  std::function<void(const RunRecord&)> on_iteration;
  // Ledger shared with the proposal kernel; totals are copied into the
  // record. Optional.
  TokenLedger* ledger = nullptr;
  // Feedback client; feedback is generated for newly evaluated particles
  // only, and skipped entirely when unset.
  ChatClient* feedback_client = nullptr;
  std::string feedback_model_name;
  std::string system_description;  // context for feedback prompts
  // Crash resume: continue from this partial record (same config and seed)
  // instead of starting at the initial model.
  const RunRecord* resume_from = nullptr;
};

// The full loop: resample with temperature-scaled weights, propagate through
// the kernel, weight non-clone particles with the configured likelihood
// path, normalize, generate feedback, stop early when the best weight stops
// improving. Individual failures become zero-weight particles; the run
// aborts only if the initial model itself cannot be evaluated.
RunRecord run_modelsmc(const RunConfig& config, const Task& task, const ProposalKernel& kernel,
                       const EngineOptions& options);

// N=1, alpha=0 reduction: one particle proposed and weighted per iteration.
RunRecord run_single_particle(const RunConfig& config, const Task& task,
                              const ProposalKernel& kernel, const EngineOptions& options);

// Shared weighting path: fits (or wraps) the configured likelihood for one
// model and returns the geometric-mean log marginal over the observed set.
struct WeightOutcome {
  double log_weight = kNegInf;
  std::string failure;
  std::vector<double> per_instance;
};

WeightOutcome weigh_model(const CandidateModel& model, const Task& task,
                          const SurrogateSettings& settings, const RunConfig& config,
                          const std::vector<std::vector<double>>& thetas, const RngStream& rng);

// Shared prior draws for one iteration's marginal estimates.
std::vector<std::vector<double>> draw_marginal_thetas(const BoxPrior& prior, int budget,
                                                      const RngStream& rng);

}  // namespace modelsmc

#endif  // MODELSMC_ENGINE_HPP
