#include "modelsmc/proposal.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>
#include <stdexcept>

namespace modelsmc {

const std::string& default_propose_template() {
  static const std::string tmpl =
      "System under study:\n{system}\n\n"
      "Program signature:\n{signature}\n\n"
      "Task:\n{task}\n\n"
      "Language reference:\n{grammar}\n\n"
      "Previously explored candidates, oldest first, with their fit scores and "
      "reviewer feedback:\n{ancestry}\n\n"
      "Propose one improved candidate program. Reply with the program only, no "
      "commentary.";
  return tmpl;
}

namespace {

void replace_all(std::string& text, const std::string& needle, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), value);
    pos += value.size();
  }
}

std::string format_ancestry(const std::vector<AncestryEntry>& ancestry) {
  if (ancestry.empty()) return "(none yet)";
  std::ostringstream out;
  for (std::size_t i = 0; i < ancestry.size(); ++i) {
    const auto& e = ancestry[i];
    out << "--- candidate " << (i + 1) << " (" << e.model_id << ") ---\n";
    if (!e.model_text.empty()) out << e.model_text << "\n";
    if (std::isfinite(e.log_weight)) {
      out << "fit score (log marginal likelihood): " << e.log_weight << "\n";
    } else {
      out << "fit score: failed to evaluate\n";
    }
    if (!e.feedback.empty()) out << "feedback: " << e.feedback << "\n";
  }
  return out.str();
}

// Pulls the program out of the reply: first fenced code block if present,
// otherwise the whole trimmed text.
std::string extract_program(const std::string& reply) {
  auto open = reply.find("```");
  if (open != std::string::npos) {
    auto line_end = reply.find('\n', open);
    if (line_end != std::string::npos) {
      auto close = reply.find("```", line_end);
      if (close != std::string::npos) {
        return reply.substr(line_end + 1, close - line_end - 1);
      }
    }
  }
  std::size_t b = reply.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = reply.find_last_not_of(" \t\r\n");
  return reply.substr(b, e - b + 1);
}

}  // namespace

std::string render_propose_prompt(const std::string& prompt_template, const TaskPrompt& task,
                                  const std::vector<AncestryEntry>& ancestry) {
  std::string out = prompt_template.empty() ? default_propose_template() : prompt_template;
  replace_all(out, "{system}", task.system_description);
  replace_all(out, "{signature}", task.signature_description);
  replace_all(out, "{task}", task.task_description);
  replace_all(out, "{grammar}", dsl::grammar_reference());
  replace_all(out, "{ancestry}", format_ancestry(ancestry));
  return out;
}

ProposeOutcome llm_propose(const std::vector<AncestryEntry>& ancestry, const TaskPrompt& task,
                           ChatClient& client, TokenLedger& ledger, int retry_budget,
                           const std::string& prompt_template, const std::string& model_name,
                           double temperature) {
  ProposeOutcome outcome;
  ChatRequest request;
  request.model = model_name;
  request.temperature = temperature;
  request.messages.push_back(
      {"system",
       "You write candidate simulator programs in a small numeric language. "
       "Follow the language reference exactly."});
  request.messages.push_back({"user", render_propose_prompt(prompt_template, task, ancestry)});

  for (int attempt = 0; attempt <= retry_budget; ++attempt) {
    std::string reply;
    try {
      ChatResponse response = client.complete(request);
      ledger.add(CallPurpose::Propose, response.prompt_tokens, response.completion_tokens);
      ++outcome.requests;
      reply = response.content;
    } catch (const std::exception& e) {
      outcome.error = std::string("chat request failed: ") + e.what();
      return outcome;
    }
    try {
      outcome.program = dsl::parse(extract_program(reply));
      outcome.ok = true;
      outcome.error.clear();
      return outcome;
    } catch (const std::exception& e) {
      outcome.error = std::string("parse error: ") + e.what();
      request.messages.push_back({"assistant", reply});
      request.messages.push_back(
          {"user", "That program failed to parse: " + std::string(e.what()) +
                       "\nReply with a corrected program only."});
    }
  }
  return outcome;
}

namespace {

Particle make_clone(const Particle& source) {
  Particle clone = source;
  // Token spend stays attributed to the original evaluation.
  clone.prompt_tokens = 0;
  clone.completion_tokens = 0;
  return clone;
}

Particle fresh_from_pool(const FixedPoolKernel& kernel, std::size_t slot, std::uint64_t iteration,
                         const RngStream& rng) {
  if (kernel.pool == nullptr || kernel.pool->empty()) {
    throw std::invalid_argument("propagate: FixedPool kernel has no pool");
  }
  RngStream draw = rng.derive(iteration, slot, "poolproposal");
  std::size_t idx = static_cast<std::size_t>(
      draw.uniform_int(0, static_cast<long long>(kernel.pool->size()) - 1));
  Particle fresh;
  fresh.model = (*kernel.pool)[idx];
  return fresh;
}

Particle fresh_from_llm(const LlmDslKernel& kernel, const std::vector<AncestryEntry>& ancestry) {
  if (kernel.client == nullptr || kernel.ledger == nullptr) {
    throw std::invalid_argument("propagate: LlmDsl kernel missing client or ledger");
  }
  Particle fresh;
  fresh.ancestry = ancestry;
  // Attribute tokens per particle via a local ledger, then fold the records
  // into the shared one (safe under concurrent proposal workers).
  TokenLedger local;
  ProposeOutcome outcome =
      llm_propose(ancestry, kernel.prompt, *kernel.client, local, kernel.retry_budget,
                  kernel.prompt_template, kernel.model_name, kernel.temperature);
  for (const auto& rec : local.records()) {
    kernel.ledger->add(rec.purpose, rec.prompt_tokens, rec.completion_tokens);
  }
  fresh.prompt_tokens = local.total_prompt_tokens();
  fresh.completion_tokens = local.total_completion_tokens();
  if (outcome.ok) {
    fresh.model.id = "";  // assigned by the engine on evaluation
    fresh.model.representation = DslSource{outcome.program.source};
    fresh.model.param_dim = std::max(kernel.param_dim, outcome.program.min_param_dim);
    fresh.model.context_dim = std::max(kernel.context_dim, outcome.program.min_context_dim);
    fresh.model.obs_dim = kernel.obs_dim;
  } else {
    fresh.model.id = "proposal_failed";
    fresh.failure = "proposal-failure: " + outcome.error;
  }
  return fresh;
}

std::vector<AncestryEntry> extend_ancestry(const Particle& ancestor, std::size_t depth) {
  std::vector<AncestryEntry> chain = ancestor.ancestry;
  AncestryEntry self;
  self.model_id = ancestor.model.id;
  if (const auto* src = std::get_if<DslSource>(&ancestor.model.representation)) {
    self.model_text = src->text;
  }
  self.feedback = ancestor.feedback;
  self.log_weight = ancestor.log_weight;
  chain.push_back(std::move(self));
  truncate_ancestry(chain, depth);
  return chain;
}

}  // namespace

PropagateResult propagate(const std::vector<Particle>& population,
                          const AncestorIndices& ancestors, double alpha,
                          const ProposalKernel& kernel, RngStream& rng,
                          const PropagateOptions& opts) {
  // The ancestor draw fixes the size of the next population; the input
  // population only serves as the base it is built from (the two differ when
  // the base is an exhaustively weighted candidate pool).
  const std::size_t n = ancestors.indices.size();
  if (n == 0) throw std::invalid_argument("propagate: no ancestors drawn");
  for (std::size_t idx : ancestors.indices) {
    if (idx >= population.size()) {
      throw std::invalid_argument("propagate: ancestor index outside the base population");
    }
  }
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("propagate: alpha outside [0,1]");

  std::size_t n_clones;
  if (opts.bernoulli_clones) {
    RngStream split = rng.derive(opts.iteration, 0, "bernsplit");
    n_clones = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (split.uniform() < alpha) ++n_clones;
    }
  } else {
    n_clones = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(n)));
  }

  std::vector<double> weights(population.size());
  std::size_t positive = 0;
  for (std::size_t i = 0; i < population.size(); ++i) {
    weights[i] = population[i].norm_weight;
    if (weights[i] > 0.0) ++positive;
  }

  PropagateResult result;
  result.n_clones = static_cast<int>(n_clones);
  result.particles.reserve(n);
  result.is_clone.assign(n, 0);
  result.source_index.assign(n, 0);

  // Clone slots first. A full-clone iteration (alpha = 1) copies the
  // resampled particles directly, so repeated resampling concentrates the
  // population on the highest-weight model. Partial cloning uses distinct
  // donors when the weighted pool supports it, falling back to the
  // with-replacement ancestor draw when it does not.
  if (n_clones > 0) {
    RngStream clone_rng = rng.derive(opts.iteration, 0, "clonepick");
    if (n_clones < n && n_clones <= positive) {
      AncestorIndices donors = weighted_sample_without_replacement(weights, n_clones, clone_rng);
      for (std::size_t i = 0; i < n_clones; ++i) {
        result.particles.push_back(make_clone(population[donors.indices[i]]));
        result.source_index[i] = donors.indices[i];
      }
    } else {
      for (std::size_t i = 0; i < n_clones; ++i) {
        result.particles.push_back(make_clone(population[ancestors.indices[i]]));
        result.source_index[i] = ancestors.indices[i];
      }
    }
    std::fill(result.is_clone.begin(), result.is_clone.begin() + static_cast<std::ptrdiff_t>(n_clones), 1);
  }

  // Fresh slots, ancestors with replacement.
  const std::size_t n_fresh = n - n_clones;
  std::vector<Particle> fresh(n_fresh);
  auto make_fresh = [&](std::size_t f) {
    const std::size_t slot = n_clones + f;
    result.source_index[slot] = ancestors.indices[slot];
    const Particle& ancestor = population[ancestors.indices[slot]];
    std::vector<AncestryEntry> chain =
        extend_ancestry(ancestor, static_cast<std::size_t>(opts.ancestry_depth));
    if (const auto* pool = std::get_if<FixedPoolKernel>(&kernel)) {
      fresh[f] = fresh_from_pool(*pool, slot, opts.iteration, rng);
      fresh[f].ancestry = std::move(chain);
    } else {
      fresh[f] = fresh_from_llm(std::get<LlmDslKernel>(kernel), chain);
    }
  };

  const int workers = std::max(1, opts.parallelism);
  if (workers == 1 || n_fresh <= 1 || std::holds_alternative<FixedPoolKernel>(kernel)) {
    for (std::size_t f = 0; f < n_fresh; ++f) make_fresh(f);
  } else {
    std::size_t next = 0;
    while (next < n_fresh) {
      std::vector<std::future<void>> batch;
      for (int w = 0; w < workers && next < n_fresh; ++w, ++next) {
        batch.push_back(std::async(std::launch::async, make_fresh, next));
      }
      for (auto& fut : batch) fut.get();
    }
  }
  for (auto& p : fresh) result.particles.push_back(std::move(p));
  return result;
}

}  // namespace modelsmc
