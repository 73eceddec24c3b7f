#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "modelsmc/engine.hpp"
#include "modelsmc/runlog.hpp"
#include "modelsmc/tasks.hpp"
#include "test_support.hpp"

using namespace modelsmc;

namespace {

Task small_gmm_task() {
  tasks::GmmTaskSettings settings;
  settings.n_models = 4;
  settings.m_observed = 20;
  return tasks::make_gmm_task(settings);
}

RunConfig small_pool_config() {
  RunConfig config;
  config.n_particles = 6;
  config.n_iterations = 3;
  config.clone_prob = 0.5;
  config.mc_budget = 200;
  config.seed = 42;
  return config;
}

EngineOptions exact_options() {
  EngineOptions options;
  options.likelihood.kind = SurrogateKind::Exact;
  return options;
}

const std::string kScriptedProgram = "let X = th0 + normal(0, 1)\nstep X = X\noutput X horizon 1";

}  // namespace

TEST_CASE("fixed-pool runs weight the whole pool exhaustively in iteration 1") {
  Task task = small_gmm_task();
  RunConfig config = small_pool_config();
  FixedPoolKernel kernel{&task.pool};
  RunRecord record = run_modelsmc(config, task, kernel, exact_options());

  CHECK(record.method == "modelsmc");
  CHECK(record.task_name == "gmm");
  CHECK(!record.aborted);
  REQUIRE(record.iterations.size() == 3);
  CHECK(record.iterations[0].iteration == 1);
  REQUIRE(record.iterations[0].entries.size() == 4);  // one per pool member
  std::set<std::string> seen_models;
  double norm_sum = 0.0;
  for (const auto& e : record.iterations[0].entries) {
    CHECK(std::isfinite(e.log_weight));  // exact densities cannot fail here
    CHECK(e.particle_id == "i1p" + std::to_string(e.slot));
    CHECK(e.parent_id.empty());
    CHECK(!e.clone);
    seen_models.insert(e.model_id);
    norm_sum += e.norm_weight;
  }
  CHECK(seen_models.size() == 4);
  CHECK(norm_sum == doctest::Approx(1.0).epsilon(1e-9));

  // Loop iterations carry N particles with the configured clone split.
  std::map<std::string, double> weight_of;
  std::map<std::string, std::string> model_of;
  for (const auto& it : record.iterations) {
    for (const auto& e : it.entries) {
      weight_of[e.particle_id] = e.log_weight;
      model_of[e.particle_id] = e.model_id;
    }
  }
  for (std::size_t i = 1; i < record.iterations.size(); ++i) {
    const auto& it = record.iterations[i];
    CHECK(it.iteration == static_cast<int>(i) + 1);
    REQUIRE(it.entries.size() == 6);
    int clones = 0;
    for (const auto& e : it.entries) {
      CHECK(e.particle_id == "i" + std::to_string(it.iteration) + "p" + std::to_string(e.slot));
      REQUIRE(weight_of.count(e.parent_id) == 1);  // parents are logged entries
      if (e.clone) {
        ++clones;
        // Clones preserve their donor's model and evaluated weight.
        CHECK(e.model_id == model_of[e.parent_id]);
        CHECK(e.log_weight == weight_of[e.parent_id]);
        CHECK(e.origin_id != e.particle_id);
      } else {
        CHECK(e.origin_id == e.particle_id);
      }
      CHECK(e.prompt_tokens == 0);  // no chat client in the loop
    }
    CHECK(clones == 3);  // floor(0.5 * 6)
  }
  CHECK(record.final_population.size() == 6);
  CHECK(record.total_prompt_tokens == 0);

  const BestParticle best = best_particle(record);
  CHECK(std::isfinite(best.log_weight));
  for (const auto& it : record.iterations) {
    for (const auto& e : it.entries) CHECK(e.log_weight <= best.log_weight);
  }
}

TEST_CASE("same seed, same run: the serialized log is byte-identical") {
  Task task = small_gmm_task();
  RunConfig config = small_pool_config();
  FixedPoolKernel kernel{&task.pool};
  RunRecord a = run_modelsmc(config, task, kernel, exact_options());
  RunRecord b = run_modelsmc(config, task, kernel, exact_options());
  CHECK(runlog_string(a) == runlog_string(b));
  // Parallel evaluation must not change the result either.
  RunConfig par = config;
  par.parallelism = 4;
  RunRecord c = run_modelsmc(par, task, kernel, exact_options());
  REQUIRE(c.iterations.size() == a.iterations.size());
  for (std::size_t i = 0; i < a.iterations.size(); ++i) {
    for (std::size_t j = 0; j < a.iterations[i].entries.size(); ++j) {
      CHECK(c.iterations[i].entries[j].log_weight ==
            doctest::Approx(a.iterations[i].entries[j].log_weight).epsilon(1e-12));
      CHECK(c.iterations[i].entries[j].model_id == a.iterations[i].entries[j].model_id);
    }
  }
}

TEST_CASE("llm-dsl runs start from the initial model and name fresh programs") {
  tasks::ConjugateTaskSettings settings;
  settings.m_observed = 3;
  Task task = tasks::make_conjugate_task(settings);

  ScriptedChatClient propose_client({kScriptedProgram});
  ScriptedChatClient feedback_client({"diagnosis text", "guidance text"});
  TokenLedger ledger;
  LlmDslKernel kernel;
  kernel.client = &propose_client;
  kernel.ledger = &ledger;
  kernel.param_dim = 1;
  kernel.obs_dim = 1;

  RunConfig config;
  config.n_particles = 4;
  config.n_iterations = 2;
  config.clone_prob = 0.5;
  config.mc_budget = 300;
  config.seed = 7;

  EngineOptions options = exact_options();
  options.ledger = &ledger;
  options.feedback_client = &feedback_client;
  options.system_description = "one-dimensional gaussian location";

  RunRecord record = run_modelsmc(config, task, ProposalKernel{kernel}, options);
  CHECK(!record.aborted);
  REQUIRE(record.iterations.size() == 3);
  CHECK(record.iterations[0].iteration == 0);
  REQUIRE(record.iterations[0].entries.size() == 1);
  CHECK(record.iterations[0].entries[0].model_id == "conjugate_gaussian");
  CHECK(std::isfinite(record.iterations[0].entries[0].log_weight));

  std::int64_t entry_prompt = 0, entry_completion = 0;
  for (const auto& it : record.iterations) {
    for (const auto& e : it.entries) {
      entry_prompt += e.prompt_tokens;
      entry_completion += e.completion_tokens;
      if (it.iteration > 0 && !e.clone) {
        CHECK(e.model_id == "m_" + e.particle_id);
        CHECK(e.model_text.find("let X") != std::string::npos);
        CHECK(e.feedback == "guidance text");
        CHECK(e.model_hash == model_hash(CandidateModel{
                                  "", DslSource{e.model_text}, 0, 0, 0}));
      }
    }
  }
  // Every chat token is attributed to exactly one entry.
  CHECK(entry_prompt == ledger.total_prompt_tokens());
  CHECK(entry_completion == ledger.total_completion_tokens());
  CHECK(record.total_prompt_tokens == ledger.total_prompt_tokens());
  // Purposes cover proposals and both feedback stages.
  std::set<std::string> purposes;
  for (const auto& rec : ledger.records()) purposes.insert(to_string(rec.purpose));
  CHECK(purposes.count("propose") == 1);
  CHECK(purposes.count("feedback_stage1") == 1);
  CHECK(purposes.count("feedback_stage2") == 1);
}

TEST_CASE("the run aborts only when the initial model cannot be weighted") {
  Task task;
  task.name = "alwaysbroken";
  task.theta_prior = BoxPrior({0.0}, {1.0});
  task.observed.pairs.push_back({{0.5}, {}});
  task.initial_model.id = "broken";
  task.initial_model.representation = DslSource{"let A = log(0 - 1)\noutput A horizon 1"};
  task.simulate = [](const CandidateModel&, const std::vector<double>&,
                     const std::vector<double>&, RngStream&) {
    SimOutcome out;
    out.error = "numeric-failure: this simulator always fails";
    return out;
  };
  RunConfig config;
  config.n_particles = 2;
  config.n_iterations = 2;
  config.mc_budget = 10;
  config.n_sim = 20;
  EngineOptions options;  // fitted surrogate path: training set cannot be built
  ScriptedChatClient client({kScriptedProgram});
  TokenLedger ledger;
  LlmDslKernel kernel;
  kernel.client = &client;
  kernel.ledger = &ledger;
  RunRecord record = run_modelsmc(config, task, ProposalKernel{kernel}, options);
  CHECK(record.aborted);
  CHECK(record.abort_reason.find("initial model failed") != std::string::npos);
  REQUIRE(record.iterations.size() == 1);
  CHECK(record.iterations[0].entries[0].failure.find("weighting-failure") != std::string::npos);
}

TEST_CASE("failed proposals become zero-weight particles and the loop continues") {
  tasks::ConjugateTaskSettings settings;
  settings.m_observed = 2;
  Task task = tasks::make_conjugate_task(settings);
  ScriptedChatClient client({"this is never a valid program"});
  TokenLedger ledger;
  LlmDslKernel kernel;
  kernel.client = &client;
  kernel.ledger = &ledger;
  kernel.retry_budget = 0;

  RunConfig config;
  config.n_particles = 3;
  config.n_iterations = 3;
  config.clone_prob = 0.5;
  config.mc_budget = 100;
  config.seed = 9;
  RunRecord record = run_modelsmc(config, task, ProposalKernel{kernel}, exact_options());
  CHECK(!record.aborted);
  REQUIRE(record.iterations.size() == 4);
  bool saw_failure = false;
  for (const auto& it : record.iterations) {
    if (it.iteration == 0) continue;
    for (const auto& e : it.entries) {
      if (!e.clone) {
        CHECK(e.failure.find("proposal-failure") != std::string::npos);
        CHECK(e.log_weight == kNegInf);
        saw_failure = true;
      } else {
        // Clones descend from the surviving initial model.
        CHECK(std::isfinite(e.log_weight));
      }
    }
  }
  CHECK(saw_failure);
}

TEST_CASE("run_single_particle is run_modelsmc with one fresh particle per round") {
  tasks::ConjugateTaskSettings settings;
  settings.m_observed = 2;
  Task task = tasks::make_conjugate_task(settings);
  RunConfig config;
  config.n_particles = 17;  // ignored by the reduction
  config.n_iterations = 3;
  config.clone_prob = 0.9;  // ignored by the reduction
  config.mc_budget = 100;
  config.seed = 4;

  auto make_kernel = [](ScriptedChatClient& client, TokenLedger& ledger) {
    LlmDslKernel kernel;
    kernel.client = &client;
    kernel.ledger = &ledger;
    kernel.param_dim = 1;
    kernel.obs_dim = 1;
    return kernel;
  };

  ScriptedChatClient client_a({kScriptedProgram});
  TokenLedger ledger_a;
  RunRecord single =
      run_single_particle(config, task, ProposalKernel{make_kernel(client_a, ledger_a)},
                          exact_options());
  CHECK(single.method == "single_particle");
  for (const auto& it : single.iterations) CHECK(it.entries.size() == 1);

  ScriptedChatClient client_b({kScriptedProgram});
  TokenLedger ledger_b;
  RunConfig reduced = config;
  reduced.n_particles = 1;
  reduced.clone_prob = 0.0;
  RunRecord manual =
      run_modelsmc(reduced, task, ProposalKernel{make_kernel(client_b, ledger_b)},
                   exact_options());
  manual.method = "single_particle";
  manual.config.n_particles = config.n_particles;
  manual.config.clone_prob = config.clone_prob;
  single.config.n_particles = config.n_particles;
  single.config.clone_prob = config.clone_prob;
  CHECK(runlog_string(single) == runlog_string(manual));
}

TEST_CASE("stalled runs stop after the early-stop patience") {
  // Candidate weights that do not depend on theta make every re-evaluation
  // identical, so the best weight is found in iteration 1 and never improves.
  Task task;
  task.name = "constpool";
  task.theta_prior = BoxPrior({0.0}, {1.0});
  task.observed.pairs.push_back({{0.0}, {}});
  task.observed.pairs.push_back({{1.0}, {}});
  for (int i = 0; i < 3; ++i) {
    CandidateModel m;
    m.id = "const_" + std::to_string(i);
    m.representation = PoolRef{static_cast<std::size_t>(i)};
    task.pool.push_back(std::move(m));
  }
  task.initial_model = task.pool.front();
  task.exact_logpdf_for = [](const CandidateModel& model) -> ExactDensity::DensityFn {
    const double level = -1.0 - 2.0 * static_cast<double>(
                                     std::get<PoolRef>(model.representation).index);
    return [level](const std::vector<double>&, const std::vector<double>&,
                   const std::vector<double>&) { return level; };
  };

  RunConfig config;
  config.n_particles = 5;
  config.n_iterations = 12;
  config.early_stop_patience = 2;
  config.mc_budget = 50;
  FixedPoolKernel kernel{&task.pool};
  RunRecord record = run_modelsmc(config, task, kernel, exact_options());
  CHECK(!record.aborted);
  // Iteration 1 finds the best candidate; three stalled loop iterations
  // exceed the patience of 2 and stop the run at iteration 4 of 12.
  REQUIRE(record.iterations.size() == 4);
  CHECK(record.iterations.back().iteration == 4);
  CHECK(best_particle(record).log_weight == doctest::Approx(-1.0));
}

TEST_CASE("best_particle breaks ties toward the earliest entry and keeps origins") {
  RunRecord record;
  IterationRecord it0;
  it0.iteration = 0;
  ParticleEntry a;
  a.iteration = 0;
  a.slot = 0;
  a.particle_id = "i0p0";
  a.origin_id = "i0p0";
  a.log_weight = -5.0;
  it0.entries.push_back(a);
  record.iterations.push_back(it0);

  IterationRecord it1;
  it1.iteration = 1;
  ParticleEntry b = a;
  b.iteration = 1;
  b.particle_id = "i1p0";
  b.origin_id = "i0p0";  // clone of the original evaluation
  b.log_weight = -5.0;
  it1.entries.push_back(b);
  ParticleEntry c = a;
  c.iteration = 1;
  c.slot = 1;
  c.particle_id = "i1p1";
  c.origin_id = "i1p1";
  c.log_weight = -7.0;
  it1.entries.push_back(c);
  record.iterations.push_back(it1);

  const BestParticle best = best_particle(record);
  CHECK(best.particle_id == "i0p0");  // earliest of the tied entries
  CHECK(best.origin_id == "i0p0");
  CHECK(best.log_weight == -5.0);

  RunRecord empty;
  CHECK_THROWS_AS(best_particle(empty), std::invalid_argument);
}

TEST_CASE("model_hash separates representations and is stable") {
  CandidateModel pool_model{"gmm_pool_1", PoolRef{1}, 0, 0, 0};
  CandidateModel dsl_model{"x", DslSource{"let A = 1\noutput A horizon 1"}, 0, 0, 0};
  CandidateModel dsl_model2{"y", DslSource{"let A = 2\noutput A horizon 1"}, 0, 0, 0};
  CHECK(model_hash(pool_model) != model_hash(dsl_model));
  CHECK(model_hash(dsl_model) != model_hash(dsl_model2));
  CHECK(model_hash(dsl_model) == model_hash(CandidateModel{"other-id", dsl_model.representation, 9, 9, 9}));
}

TEST_CASE("weigh_model exact path matches the quadrature reference") {
  tasks::ConjugateTaskSettings settings;
  settings.m_observed = 1;
  Task task = tasks::make_conjugate_task(settings);
  const double x_o = task.observed.pairs[0].x[0];

  RunConfig config;
  config.mc_budget = 50000;
  SurrogateSettings exact;
  exact.kind = SurrogateKind::Exact;
  auto thetas = draw_marginal_thetas(task.theta_prior, config.mc_budget,
                                     RngStream(3).derive(0, 0, "wtheta"));
  auto outcome = weigh_model(task.initial_model, task, exact, config, thetas, RngStream(3));
  CHECK(outcome.failure.empty());
  CHECK(outcome.per_instance.size() == 1);
  CHECK(outcome.log_weight ==
        doctest::Approx(tasks::conjugate_marginal_quadrature(x_o)).epsilon(0.01));
}

TEST_CASE("weigh_model fitted-surrogate path approximates the same marginal") {
  tasks::ConjugateTaskSettings settings;
  settings.m_observed = 1;
  Task task = tasks::make_conjugate_task(settings);
  const double x_o = task.observed.pairs[0].x[0];

  RunConfig config;
  config.mc_budget = 20000;
  config.n_sim = 2000;
  SurrogateSettings fitted;  // linear-Gaussian surrogate is exact for this task
  auto thetas = draw_marginal_thetas(task.theta_prior, config.mc_budget,
                                     RngStream(5).derive(0, 0, "wtheta"));
  auto outcome = weigh_model(task.initial_model, task, fitted, config, thetas, RngStream(5));
  CHECK(outcome.failure.empty());
  CHECK(outcome.log_weight ==
        doctest::Approx(tasks::conjugate_marginal_quadrature(x_o)).epsilon(0.05));
}

TEST_CASE("draw_marginal_thetas is pure in its stream") {
  BoxPrior prior({0.0, -1.0}, {1.0, 1.0});
  auto a = draw_marginal_thetas(prior, 100, RngStream(8).derive(1, 0, "margtheta"));
  auto b = draw_marginal_thetas(prior, 100, RngStream(8).derive(1, 0, "margtheta"));
  CHECK(a == b);
  auto c = draw_marginal_thetas(prior, 100, RngStream(8).derive(2, 0, "margtheta"));
  CHECK(a != c);
}
