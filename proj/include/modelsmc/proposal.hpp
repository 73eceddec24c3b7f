#ifndef MODELSMC_PROPOSAL_HPP
#define MODELSMC_PROPOSAL_HPP

#include <string>
#include <variant>
#include <vector>

#include "modelsmc/core.hpp"
#include "modelsmc/dsl.hpp"
#include "modelsmc/llm_client.hpp"
#include "modelsmc/resampling.hpp"

namespace modelsmc {

// Three-part task context injected into every proposal prompt: what the
// system is, what a candidate program must look like, and what the inference
// task asks for.
struct TaskPrompt {
  std::string system_description;
  std::string signature_description;
  std::string task_description;
};

// Fresh proposals are uniform draws from the fixed candidate pool.
struct FixedPoolKernel {
  const std::vector<CandidateModel>* pool = nullptr;
};

struct LlmDslKernel {
  ChatClient* client = nullptr;
  TokenLedger* ledger = nullptr;
  TaskPrompt prompt;
  std::string prompt_template;  // text with {system} {signature} {task} {ancestry} {grammar}
  int retry_budget = 3;
  std::string model_name;
  double temperature = 1.0;
  int param_dim = 0;
  int context_dim = 0;
  int obs_dim = 0;
};

using ProposalKernel = std::variant<FixedPoolKernel, LlmDslKernel>;

struct ProposeOutcome {
  bool ok = false;
  dsl::DslProgram program;
  std::string error;
  int requests = 0;
};

std::string render_propose_prompt(const std::string& prompt_template, const TaskPrompt& task,
                                  const std::vector<AncestryEntry>& ancestry);

// Asks the client for a DSL program; on parse failure, re-prompts with the
// parse error appended, up to retry_budget additional attempts.
ProposeOutcome llm_propose(const std::vector<AncestryEntry>& ancestry, const TaskPrompt& task,
                           ChatClient& client, TokenLedger& ledger, int retry_budget,
                           const std::string& prompt_template, const std::string& model_name = "",
                           double temperature = 1.0);

// Default template used when no prompt file is configured.
const std::string& default_propose_template();

struct PropagateOptions {
  // Per-particle Bernoulli(alpha) split instead of the deterministic
  // floor(alpha*N) clone count.
  bool bernoulli_clones = false;
  int parallelism = 1;
  int ancestry_depth = 5;
  std::uint64_t iteration = 0;  // namespaces the per-particle rng streams
};

struct PropagateResult {
  std::vector<Particle> particles;
  // Parallel to `particles`; clones keep their evaluated weight and skip
  // re-weighting downstream.
  std::vector<char> is_clone;
  // Index into the input population: the clone donor, or the ancestor a
  // fresh proposal was conditioned on.
  std::vector<std::size_t> source_index;
  int n_clones = 0;
};

// Mixture propagation: part of the next population is cloned from the current
// weighted one (distinct donors when partially cloning and enough
// positive-weight particles exist; a full-clone iteration copies the
// resampled ancestors so selection compounds), the rest are fresh kernel
// proposals conditioned on ancestors drawn with replacement.
// Failed proposals become failed particles, never exceptions.
PropagateResult propagate(const std::vector<Particle>& population,
                          const AncestorIndices& ancestors, double alpha,
                          const ProposalKernel& kernel, RngStream& rng,
                          const PropagateOptions& opts = {});

}  // namespace modelsmc

#endif  // MODELSMC_PROPOSAL_HPP
