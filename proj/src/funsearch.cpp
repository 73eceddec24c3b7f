#include "modelsmc/funsearch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace modelsmc {

namespace {

// Weight applied per token so that equal-score programs tip toward shorter
// source; negligible against any real score difference.
constexpr double kLengthPenalty = 1e-6;

}  // namespace

IslandDatabase::IslandDatabase(int n_islands, double score_temperature)
    : islands_(static_cast<std::size_t>(n_islands)),
      best_(static_cast<std::size_t>(n_islands), kNegInf),
      temperature_(score_temperature) {
  if (n_islands < 1) throw std::invalid_argument("IslandDatabase: need at least one island");
  if (!(score_temperature > 0.0)) {
    throw std::invalid_argument("IslandDatabase: score temperature must be > 0");
  }
}

double IslandDatabase::global_best() const {
  double best = kNegInf;
  for (double b : best_) best = std::max(best, b);
  return best;
}

void IslandDatabase::insert(int island, IslandProgram program) {
  auto& pool = islands_.at(island);
  best_.at(island) = std::max(best_.at(island), program.score);
  pool.push_back(std::move(program));
}

int IslandDatabase::sample_island(RngStream& rng) const {
  std::vector<int> nonempty;
  for (int i = 0; i < n_islands(); ++i) {
    if (!islands_[i].empty()) nonempty.push_back(i);
  }
  if (nonempty.empty()) throw std::runtime_error("sample_island: database is empty");
  return nonempty[static_cast<std::size_t>(
      rng.uniform_int(0, static_cast<std::int64_t>(nonempty.size()) - 1))];
}

std::vector<IslandProgram> IslandDatabase::sample_prompt_programs(int island, int k,
                                                                  RngStream& rng,
                                                                  bool dedup) const {
  const auto& pool = islands_.at(island);
  if (pool.empty()) throw std::invalid_argument("sample_prompt_programs: island is empty");

  std::vector<double> logits(pool.size());
  double max_logit = kNegInf;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    logits[i] = pool[i].score / temperature_ - kLengthPenalty * pool[i].length;
    max_logit = std::max(max_logit, logits[i]);
  }
  std::vector<double> probs(pool.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    probs[i] = std::isfinite(logits[i]) ? std::exp(logits[i] - max_logit) : 0.0;
    total += probs[i];
  }
  if (total <= 0.0) {
    // Every score is -inf (all failed): fall back to uniform.
    std::fill(probs.begin(), probs.end(), 1.0);
    total = static_cast<double>(pool.size());
  }
  for (double& p : probs) p /= total;

  std::vector<IslandProgram> out;
  std::vector<char> taken(pool.size(), 0);
  for (int draw = 0; draw < k; ++draw) {
    double u = rng.uniform();
    double acc = 0.0;
    std::size_t pick = pool.size() - 1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      acc += probs[i];
      if (u < acc) {
        pick = i;
        break;
      }
    }
    if (dedup) {
      if (taken[pick]) continue;
      taken[pick] = 1;
    }
    out.push_back(pool[pick]);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const IslandProgram& a, const IslandProgram& b) { return a.score < b.score; });
  return out;
}

void IslandDatabase::reinitialize_worst(double fraction, RngStream& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("reinitialize_worst: fraction must be in (0,1)");
  }
  const int n = n_islands();
  int n_reset = static_cast<int>(std::ceil(fraction * n));
  n_reset = std::min(n_reset, n - 1);
  if (n_reset <= 0) return;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return best_[a] < best_[b]; });

  std::vector<int> survivors(order.begin() + n_reset, order.end());
  for (int r = 0; r < n_reset; ++r) {
    const int island = order[r];
    islands_[island].clear();
    best_[island] = kNegInf;
    const int donor = survivors[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(survivors.size()) - 1))];
    const auto& donor_pool = islands_[donor];
    if (donor_pool.empty()) continue;
    const IslandProgram* donor_best = &donor_pool.front();
    for (const auto& p : donor_pool) {
      if (p.score > donor_best->score) donor_best = &p;
    }
    insert(island, *donor_best);
  }
}

double score_model(const SurrogateLikelihood& surrogate, const ObservedDataset& dataset,
                   const std::vector<MapEstimate>& theta_hats) {
  ConditionalMetric metric = conditional_loglik_metric(surrogate, dataset, theta_hats);
  if (metric.failed) return kNegInf;
  return -metric.value;
}

int dsl_token_count(const std::string& source) {
  int count = 0;
  bool in_token = false;
  for (char c : source) {
    bool sep = c == ' ' || c == '\n' || c == '\t' || c == '\r' || c == ',' || c == '(' || c == ')';
    if (!sep && !in_token) ++count;
    in_token = !sep;
  }
  return count;
}

namespace {

struct ScoredProgram {
  double score = kNegInf;
  std::string failure;
};

ScoredProgram score_candidate(const CandidateModel& model, const Task& task,
                              const SurrogateSettings& settings, const RunConfig& config,
                              const RngStream& rng) {
  ScoredProgram result;
  try {
    const SummaryFn summary = settings.summary.is_identity() ? task.summary : settings.summary;
    std::unique_ptr<SurrogateLikelihood> surrogate;
    if (settings.kind == SurrogateKind::Exact) {
      ExactDensity::DensityFn fn = settings.exact;
      if (task.exact_logpdf_for) fn = task.exact_logpdf_for(model);
      if (!fn) throw std::invalid_argument("exact likelihood requested but none available");
      surrogate = std::make_unique<ExactDensity>(std::move(fn));
    } else {
      SyntheticDataset training = build_training_set(model, task.simulate, task.theta_prior,
                                                     task.context_sampler, config.n_sim,
                                                     rng.derive(0, 0, "train"));
      if (task.context_map) {
        for (auto& row : training.rows) row.context = task.context_map(row.context);
      }
      training = apply_summary(summary, training);
      SurrogateSettings local = settings;
      local.summary = summary;
      surrogate = fit_surrogate(training, local);
    }
    ObservedDataset observed;
    observed.pairs.reserve(task.observed.size());
    for (const auto& inst : task.observed.pairs) {
      observed.pairs.push_back({summary(inst.x), task.mapped_context(inst.context)});
    }
    std::vector<MapEstimate> theta_hats =
        estimate_map_dataset(*surrogate, observed, task.theta_prior, config.map_samples,
                             rng.derive(0, 1, "mapfit"), config.parallelism);
    result.score = score_model(*surrogate, observed, theta_hats);
    if (result.score == kNegInf) result.failure = "scoring-failure: conditional density is zero";
  } catch (const std::exception& e) {
    result.failure = std::string("scoring-failure: ") + e.what();
  }
  return result;
}

}  // namespace

RunRecord run_funsearch(const RunConfig& config, const FunsearchConfig& fs, const Task& task,
                        const LlmDslKernel& kernel, const EngineOptions& options) {
  config.validate();
  if (kernel.client == nullptr || kernel.ledger == nullptr) {
    throw std::invalid_argument("run_funsearch: kernel missing client or ledger");
  }
  RunRecord record;
  record.method = "funsearch";
  record.task_name = task.name;
  record.seed = config.seed;
  record.config = config;

  RngStream root(config.seed);
  IslandDatabase db(fs.n_islands, fs.score_temperature);

  auto record_entry = [&](int iteration, const CandidateModel& model, double score,
                          const std::string& failure, std::int64_t prompt_tokens,
                          std::int64_t completion_tokens) {
    ParticleEntry entry;
    entry.iteration = iteration;
    entry.slot = 0;
    entry.particle_id = "i" + std::to_string(iteration) + "p0";
    entry.origin_id = entry.particle_id;
    entry.model_id = model.id;
    if (const auto* src = std::get_if<DslSource>(&model.representation)) entry.model_text = src->text;
    entry.model_hash = model_hash(model);
    entry.log_weight = score;
    entry.failure = failure;
    entry.prompt_tokens = prompt_tokens;
    entry.completion_tokens = completion_tokens;
    IterationRecord it;
    it.iteration = iteration;
    it.entries.push_back(std::move(entry));
    record.iterations.push_back(std::move(it));
    if (options.on_iteration) options.on_iteration(record);
  };

  // Seed: score the initial model once and plant it on every island.
  ScoredProgram init =
      score_candidate(task.initial_model, task, options.likelihood, config, root.derive(0, 0, "score"));
  std::string init_source;
  if (const auto* src = std::get_if<DslSource>(&task.initial_model.representation)) {
    init_source = src->text;
  }
  for (int i = 0; i < fs.n_islands; ++i) {
    db.insert(i, {task.initial_model.id, init_source, init.score, dsl_token_count(init_source)});
  }
  record_entry(0, task.initial_model, init.score, init.failure, 0, 0);

  int proposal = 0;
  while (proposal < fs.n_proposals) {
    if (proposal > 0 && proposal % fs.reinit_period == 0) {
      RngStream reinit_rng = root.derive(static_cast<std::uint64_t>(proposal), 0, "reinit");
      db.reinitialize_worst(fs.reinit_fraction, reinit_rng);
    }
    RngStream island_rng = root.derive(static_cast<std::uint64_t>(proposal + 1), 0, "island");
    const int island = db.sample_island(island_rng);
    RngStream pick_rng = root.derive(static_cast<std::uint64_t>(proposal + 1), 1, "promptpick");
    std::vector<IslandProgram> prompt_programs =
        db.sample_prompt_programs(island, fs.prompt_k, pick_rng);

    std::vector<AncestryEntry> ancestry;
    for (const auto& p : prompt_programs) {
      AncestryEntry e;
      e.model_id = p.id;
      e.model_text = p.source;
      e.log_weight = p.score;
      ancestry.push_back(std::move(e));
    }

    for (int j = 0; j < fs.proposals_per_prompt && proposal < fs.n_proposals; ++j) {
      ++proposal;
      TokenLedger local;
      ProposeOutcome outcome =
          llm_propose(ancestry, kernel.prompt, *kernel.client, local, kernel.retry_budget,
                      kernel.prompt_template, kernel.model_name, kernel.temperature);
      for (const auto& rec : local.records()) {
        kernel.ledger->add(rec.purpose, rec.prompt_tokens, rec.completion_tokens);
      }

      CandidateModel model;
      model.id = "fs_" + std::to_string(proposal);
      double score = kNegInf;
      std::string failure;
      if (outcome.ok) {
        model.representation = DslSource{outcome.program.source};
        model.param_dim = std::max(kernel.param_dim, outcome.program.min_param_dim);
        model.context_dim = std::max(kernel.context_dim, outcome.program.min_context_dim);
        model.obs_dim = kernel.obs_dim;
        ScoredProgram scored =
            score_candidate(model, task, options.likelihood, config,
                            root.derive(static_cast<std::uint64_t>(proposal), 2, "score"));
        score = scored.score;
        failure = scored.failure;
        if (std::isfinite(score)) {
          db.insert(island, {model.id, outcome.program.source, score,
                             dsl_token_count(outcome.program.source)});
        }
      } else {
        failure = "proposal-failure: " + outcome.error;
      }
      record_entry(proposal, model, score, failure, local.total_prompt_tokens(),
                   local.total_completion_tokens());
    }
  }

  const TokenLedger* totals = options.ledger != nullptr ? options.ledger : kernel.ledger;
  record.total_prompt_tokens = totals->total_prompt_tokens();
  record.total_completion_tokens = totals->total_completion_tokens();
  return record;
}

}  // namespace modelsmc
