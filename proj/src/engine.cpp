#include "modelsmc/engine.hpp"

#include "modelsmc/runlog.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>
#include <stdexcept>

namespace modelsmc {

namespace {

std::uint64_t fnv1a_bytes(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string particle_id_of(int iteration, int slot) {
  return "i" + std::to_string(iteration) + "p" + std::to_string(slot);
}

std::string model_text_of(const CandidateModel& model) {
  if (const auto* src = std::get_if<DslSource>(&model.representation)) return src->text;
  return "";
}

SummaryFn effective_summary(const Task& task, const SurrogateSettings& settings) {
  return settings.summary.is_identity() ? task.summary : settings.summary;
}

ObservedDataset prepare_observed(const Task& task, const SummaryFn& summary) {
  ObservedDataset out;
  out.pairs.reserve(task.observed.size());
  for (const auto& inst : task.observed.pairs) {
    out.pairs.push_back({summary(inst.x), task.mapped_context(inst.context)});
  }
  return out;
}

void run_parallel(std::size_t n, int parallelism, const std::function<void(std::size_t)>& body) {
  if (parallelism <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::size_t next = 0;
  while (next < n) {
    std::vector<std::future<void>> batch;
    for (int w = 0; w < parallelism && next < n; ++w, ++next) {
      batch.push_back(std::async(std::launch::async, body, next));
    }
    for (auto& fut : batch) fut.get();
  }
}

std::string per_instance_summary(const std::vector<double>& values) {
  if (values.empty()) return "no per-instance marginals";
  double lo = values[0], hi = values[0], sum = 0.0;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  std::ostringstream out;
  out << "per-instance log marginal mean " << sum / static_cast<double>(values.size()) << ", min "
      << lo << ", max " << hi;
  return out.str();
}

}  // namespace

std::uint64_t model_hash(const CandidateModel& model) {
  std::string repr;
  if (const auto* pool = std::get_if<PoolRef>(&model.representation)) {
    repr = "pool:" + std::to_string(pool->index) + ":" + model.id;
  } else if (const auto* src = std::get_if<DslSource>(&model.representation)) {
    repr = "dsl:" + src->text;
  } else {
    repr = "ext:" + std::get<ExternalScript>(model.representation).command;
  }
  return fnv1a_bytes(repr);
}

std::vector<std::vector<double>> draw_marginal_thetas(const BoxPrior& prior, int budget,
                                                      const RngStream& rng) {
  RngStream stream = rng;
  std::vector<std::vector<double>> thetas;
  thetas.reserve(static_cast<std::size_t>(budget));
  for (int b = 0; b < budget; ++b) thetas.push_back(prior.sample(stream));
  return thetas;
}

WeightOutcome weigh_model(const CandidateModel& model, const Task& task,
                          const SurrogateSettings& settings, const RunConfig& config,
                          const std::vector<std::vector<double>>& thetas, const RngStream& rng) {
  WeightOutcome outcome;
  const SummaryFn summary = effective_summary(task, settings);
  try {
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
    ObservedDataset observed = prepare_observed(task, summary);
    outcome.per_instance =
        marginal_logliks_shared(*surrogate, observed, thetas, config.parallelism);
    outcome.log_weight = geometric_mean_logweight(outcome.per_instance);
    if (outcome.log_weight == kNegInf) {
      outcome.failure = "weighting-failure: at least one observed instance has zero marginal";
    }
  } catch (const std::exception& e) {
    outcome.log_weight = kNegInf;
    outcome.failure = std::string("weighting-failure: ") + e.what();
  }
  return outcome;
}

namespace {

struct LoopState {
  std::vector<Particle> population;
  std::vector<std::string> entry_ids;  // logged id per population index
  // Last population (and its ids) holding at least one finite weight, used
  // to resample when every current particle failed.
  std::vector<Particle> base_population;
  std::vector<std::string> base_entry_ids;
};

void assign_norm_weights(std::vector<Particle>& population) {
  std::vector<double> logw(population.size());
  bool any_finite = false;
  for (std::size_t i = 0; i < population.size(); ++i) {
    logw[i] = population[i].log_weight;
    any_finite = any_finite || std::isfinite(logw[i]);
  }
  if (!any_finite) {
    for (auto& p : population) p.norm_weight = 0.0;
    return;
  }
  std::vector<double> norm = normalize_log_weights(logw);
  for (std::size_t i = 0; i < population.size(); ++i) population[i].norm_weight = norm[i];
}

void generate_particle_feedback(Particle& particle, const WeightOutcome& outcome,
                                const EngineOptions& options) {
  if (options.feedback_client == nullptr) return;
  std::string weight_summary =
      particle.failed() ? std::string("evaluation failed")
                        : "log geometric-mean marginal likelihood: " +
                              std::to_string(particle.log_weight);
  std::string diagnosis = particle.failure.empty() ? per_instance_summary(outcome.per_instance)
                                                   : particle.failure;
  TokenLedger local;
  FeedbackResult feedback = generate_feedback(
      model_text_of(particle.model).empty() ? particle.model.id : model_text_of(particle.model),
      weight_summary, diagnosis, options.system_description, *options.feedback_client, local,
      options.feedback_model_name);
  particle.feedback = feedback.text;
  particle.prompt_tokens += local.total_prompt_tokens();
  particle.completion_tokens += local.total_completion_tokens();
  if (options.ledger != nullptr) {
    for (const auto& rec : local.records()) {
      options.ledger->add(rec.purpose, rec.prompt_tokens, rec.completion_tokens);
    }
  }
}

// Resumed populations come back from the log with source text only; pool
// members and the initial model are re-bound by id.
void restore_models(std::vector<Particle>& population, const Task& task) {
  for (auto& p : population) {
    if (const auto* src = std::get_if<DslSource>(&p.model.representation);
        src != nullptr && !src->text.empty()) {
      continue;
    }
    if (p.model.id == task.initial_model.id) {
      p.model = task.initial_model;
      continue;
    }
    for (const auto& m : task.pool) {
      if (m.id == p.model.id) {
        p.model = m;
        break;
      }
    }
  }
}

ParticleEntry entry_from_particle(const Particle& p, int iteration, int slot,
                                  const std::string& parent_id, bool clone) {
  ParticleEntry entry;
  entry.iteration = iteration;
  entry.slot = slot;
  entry.particle_id = particle_id_of(iteration, slot);
  entry.parent_id = parent_id;
  entry.origin_id = p.origin_id;
  entry.model_id = p.model.id;
  entry.model_text = model_text_of(p.model);
  entry.model_hash = model_hash(p.model);
  entry.log_weight = p.log_weight;
  entry.norm_weight = p.norm_weight;
  entry.clone = clone;
  entry.failure = p.failure;
  entry.feedback = p.feedback;
  entry.prompt_tokens = p.prompt_tokens;
  entry.completion_tokens = p.completion_tokens;
  return entry;
}

}  // namespace

RunRecord run_modelsmc(const RunConfig& config, const Task& task, const ProposalKernel& kernel,
                       const EngineOptions& options) {
  config.validate();
  RunRecord record;
  record.method = "modelsmc";
  record.task_name = task.name;
  record.seed = config.seed;
  record.config = config;

  RngStream root(config.seed);
  const std::size_t n = static_cast<std::size_t>(config.n_particles);
  const bool pool_mode =
      std::holds_alternative<FixedPoolKernel>(kernel) && !task.pool.empty();

  LoopState state;
  double best_logw = kNegInf;
  int stale = 0;
  int first_loop_iteration;
  const bool resuming =
      options.resume_from != nullptr && !options.resume_from->iterations.empty();

  if (resuming) {
    record.iterations = options.resume_from->iterations;
    state.population = reconstruct_population(record, config.ancestry_depth);
    restore_models(state.population, task);
    for (const auto& e : record.iterations.back().entries) {
      state.entry_ids.push_back(e.particle_id);
    }
    // Most recent iteration with a usable weight serves as the resampling
    // base in case the last one failed entirely.
    bool base_found = false;
    for (std::size_t i = record.iterations.size(); i-- > 0 && !base_found;) {
      for (const auto& e : record.iterations[i].entries) {
        if (std::isfinite(e.log_weight)) {
          RunRecord prefix = record;
          prefix.iterations.resize(i + 1);
          state.base_population = reconstruct_population(prefix, config.ancestry_depth);
          restore_models(state.base_population, task);
          state.base_entry_ids.clear();
          for (const auto& be : prefix.iterations.back().entries) {
            state.base_entry_ids.push_back(be.particle_id);
          }
          base_found = true;
          break;
        }
      }
    }
    if (!base_found) {
      record.aborted = true;
      record.abort_reason = "resume: no iteration with a finite weight";
      return record;
    }
    // Best-so-far and stall count, replayed from the log.
    for (std::size_t i = 0; i < record.iterations.size(); ++i) {
      double it_best = kNegInf;
      for (const auto& e : record.iterations[i].entries) it_best = std::max(it_best, e.log_weight);
      if (i == 0 || it_best > best_logw) {
        best_logw = std::max(best_logw, it_best);
        if (i > 0) stale = 0;
      } else {
        ++stale;
      }
    }
    first_loop_iteration = record.iterations.back().iteration + 1;
  } else if (pool_mode) {
    // Exhaustive weighting of the whole candidate pool as iteration 1, so
    // every candidate is reachable regardless of the initial model.
    const std::size_t pool_n = task.pool.size();
    state.population.resize(pool_n);
    std::vector<WeightOutcome> outcomes(pool_n);
    std::vector<std::vector<double>> thetas =
        draw_marginal_thetas(task.theta_prior, config.mc_budget, root.derive(1, 0, "margtheta"));
    run_parallel(pool_n, config.parallelism, [&](std::size_t i) {
      Particle p;
      p.model = task.pool[i];
      outcomes[i] = weigh_model(p.model, task, options.likelihood, config, thetas,
                                root.derive(1, i, "eval"));
      p.log_weight = outcomes[i].log_weight;
      p.failure = outcomes[i].failure;
      p.origin_id = particle_id_of(1, static_cast<int>(i));
      state.population[i] = std::move(p);
    });
    assign_norm_weights(state.population);
    IterationRecord it;
    it.iteration = 1;
    for (std::size_t i = 0; i < pool_n; ++i) {
      state.entry_ids.push_back(particle_id_of(1, static_cast<int>(i)));
      it.entries.push_back(
          entry_from_particle(state.population[i], 1, static_cast<int>(i), "", false));
    }
    record.iterations.push_back(std::move(it));
    first_loop_iteration = 2;
  } else {
    // Iteration 0: the initial model, weighted once and copied N times.
    Particle init;
    init.model = task.initial_model;
    std::vector<std::vector<double>> thetas =
        draw_marginal_thetas(task.theta_prior, config.mc_budget, root.derive(0, 0, "margtheta"));
    WeightOutcome outcome = weigh_model(init.model, task, options.likelihood, config, thetas,
                                        root.derive(0, 0, "eval"));
    init.log_weight = outcome.log_weight;
    init.failure = outcome.failure;
    init.origin_id = particle_id_of(0, 0);
    if (init.failed()) {
      record.aborted = true;
      record.abort_reason = "initial model failed to evaluate: " + outcome.failure;
      IterationRecord it;
      it.iteration = 0;
      init.norm_weight = 0.0;
      it.entries.push_back(entry_from_particle(init, 0, 0, "", false));
      record.iterations.push_back(std::move(it));
      return record;
    }
    init.norm_weight = 1.0;
    IterationRecord it;
    it.iteration = 0;
    it.entries.push_back(entry_from_particle(init, 0, 0, "", false));
    record.iterations.push_back(std::move(it));
    state.population.assign(n, init);
    state.entry_ids.assign(n, particle_id_of(0, 0));
    first_loop_iteration = 1;
  }

  if (!resuming) {
    for (const auto& p : state.population) best_logw = std::max(best_logw, p.log_weight);
    state.base_population = state.population;
    state.base_entry_ids = state.entry_ids;
    if (options.on_iteration) options.on_iteration(record);
  }

  for (int k = first_loop_iteration; k <= config.n_iterations; ++k) {
    // Resample from the most recent population with usable weights.
    bool current_usable = false;
    for (const auto& p : state.population) current_usable = current_usable || !p.failed();
    const std::vector<Particle>& base =
        current_usable ? state.population : state.base_population;
    const std::vector<std::string>& base_ids =
        current_usable ? state.entry_ids : state.base_entry_ids;

    std::vector<double> base_logw(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) base_logw[i] = base[i].log_weight;
    std::vector<double> resample_weights =
        temperature_scaled_weights(base_logw, config.resample_temperature);
    RngStream resample_rng = root.derive(static_cast<std::uint64_t>(k), 0, "resample");
    AncestorIndices ancestors = categorical_sample(resample_weights, n, resample_rng);

    PropagateOptions popts;
    popts.bernoulli_clones = config.bernoulli_clones;
    popts.parallelism = config.parallelism;
    popts.ancestry_depth = config.ancestry_depth;
    popts.iteration = static_cast<std::uint64_t>(k);
    PropagateResult prop = propagate(base, ancestors, config.clone_prob, kernel, root, popts);

    std::vector<std::vector<double>> thetas = draw_marginal_thetas(
        task.theta_prior, config.mc_budget, root.derive(static_cast<std::uint64_t>(k), 0, "margtheta"));
    std::vector<WeightOutcome> outcomes(n);
    run_parallel(n, config.parallelism, [&](std::size_t slot) {
      if (prop.is_clone[slot]) return;
      Particle& p = prop.particles[slot];
      if (p.model.id.empty()) p.model.id = "m_" + particle_id_of(k, static_cast<int>(slot));
      p.origin_id = particle_id_of(k, static_cast<int>(slot));
      if (!p.failure.empty()) {
        p.log_weight = kNegInf;
        return;
      }
      outcomes[slot] = weigh_model(p.model, task, options.likelihood, config, thetas,
                                   root.derive(static_cast<std::uint64_t>(k), slot, "eval"));
      p.log_weight = outcomes[slot].log_weight;
      p.failure = outcomes[slot].failure;
    });
    assign_norm_weights(prop.particles);

    for (std::size_t slot = 0; slot < n; ++slot) {
      if (!prop.is_clone[slot]) {
        generate_particle_feedback(prop.particles[slot], outcomes[slot], options);
      }
    }

    IterationRecord it;
    it.iteration = k;
    std::vector<std::string> new_ids(n);
    for (std::size_t slot = 0; slot < n; ++slot) {
      new_ids[slot] = particle_id_of(k, static_cast<int>(slot));
      const std::string& parent = base_ids[prop.source_index[slot]];
      it.entries.push_back(entry_from_particle(prop.particles[slot], k, static_cast<int>(slot),
                                               parent, prop.is_clone[slot] != 0));
    }
    record.iterations.push_back(std::move(it));

    state.population = std::move(prop.particles);
    state.entry_ids = std::move(new_ids);
    bool any_finite = false;
    double iteration_best = kNegInf;
    for (const auto& p : state.population) {
      any_finite = any_finite || !p.failed();
      iteration_best = std::max(iteration_best, p.log_weight);
    }
    if (any_finite) {
      state.base_population = state.population;
      state.base_entry_ids = state.entry_ids;
    }
    if (iteration_best > best_logw) {
      best_logw = iteration_best;
      stale = 0;
    } else {
      ++stale;
    }
    if (options.on_iteration) options.on_iteration(record);
    if (stale > config.early_stop_patience) break;
  }

  record.final_population = state.population;
  if (options.ledger != nullptr) {
    record.total_prompt_tokens = options.ledger->total_prompt_tokens();
    record.total_completion_tokens = options.ledger->total_completion_tokens();
  }
  return record;
}

RunRecord run_single_particle(const RunConfig& config, const Task& task,
                              const ProposalKernel& kernel, const EngineOptions& options) {
  RunConfig single = config;
  single.n_particles = 1;
  single.clone_prob = 0.0;
  RunRecord record = run_modelsmc(single, task, kernel, options);
  record.method = "single_particle";
  return record;
}

BestParticle best_particle(const RunRecord& record) {
  if (record.iterations.empty()) throw std::invalid_argument("best_particle: empty record");
  const ParticleEntry* best = nullptr;
  for (const auto& it : record.iterations) {
    for (const auto& entry : it.entries) {
      if (best == nullptr || entry.log_weight > best->log_weight) best = &entry;
    }
  }
  BestParticle out;
  out.particle_id = best->particle_id;
  out.origin_id = best->origin_id;
  out.model_id = best->model_id;
  out.model_text = best->model_text;
  out.log_weight = best->log_weight;
  out.iteration = best->iteration;
  out.slot = best->slot;
  return out;
}

}  // namespace modelsmc
