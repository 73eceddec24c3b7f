#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <string>
#include <vector>

#include "modelsmc/proposal.hpp"
#include "test_support.hpp"

using namespace modelsmc;

namespace {

const std::string kGoodProgram = "let A = th0\nstep A = A + 1\noutput A horizon 2";

std::vector<CandidateModel> make_pool(int n) {
  std::vector<CandidateModel> pool;
  for (int i = 0; i < n; ++i) {
    CandidateModel m;
    m.id = "pool_" + std::to_string(i);
    m.representation = PoolRef{static_cast<std::size_t>(i)};
    pool.push_back(std::move(m));
  }
  return pool;
}

std::vector<Particle> make_population(const std::vector<CandidateModel>& pool, int n) {
  std::vector<Particle> population;
  for (int i = 0; i < n; ++i) {
    Particle p;
    p.model = pool[static_cast<std::size_t>(i) % pool.size()];
    p.log_weight = -static_cast<double>(i + 1);
    p.origin_id = "origin_" + std::to_string(i);
    population.push_back(std::move(p));
  }
  const auto weights = normalize_log_weights([&] {
    std::vector<double> lw;
    for (const auto& p : population) lw.push_back(p.log_weight);
    return lw;
  }());
  for (int i = 0; i < n; ++i) population[static_cast<std::size_t>(i)].norm_weight = weights[static_cast<std::size_t>(i)];
  return population;
}

AncestorIndices draw_ancestors(const std::vector<Particle>& population, std::uint64_t seed) {
  std::vector<double> w;
  for (const auto& p : population) w.push_back(p.norm_weight);
  RngStream rng = RngStream(seed).derive(0, 0, "testresample");
  return categorical_sample(w, population.size(), rng);
}

}  // namespace

TEST_CASE("render_propose_prompt fills every placeholder") {
  TaskPrompt prompt;
  prompt.system_description = "SYSDESC";
  prompt.signature_description = "SIGDESC";
  prompt.task_description = "TASKDESC";
  std::vector<AncestryEntry> ancestry;
  ancestry.push_back({"m_a", "let A = 1\noutput A horizon 1", "tighten the variance", -12.5});
  ancestry.push_back({"m_b", "", "", kNegInf});

  const std::string text = render_propose_prompt(default_propose_template(), prompt, ancestry);
  CHECK(text.find("SYSDESC") != std::string::npos);
  CHECK(text.find("SIGDESC") != std::string::npos);
  CHECK(text.find("TASKDESC") != std::string::npos);
  CHECK(text.find("let NAME") != std::string::npos);  // grammar reference
  CHECK(text.find("m_a") != std::string::npos);
  CHECK(text.find("tighten the variance") != std::string::npos);
  CHECK(text.find("failed to evaluate") != std::string::npos);
  CHECK(text.find("{") == std::string::npos);  // nothing left unexpanded

  const std::string empty_chain = render_propose_prompt("", prompt, {});
  CHECK(empty_chain.find("(none yet)") != std::string::npos);
}

TEST_CASE("llm_propose accepts a valid program on the first attempt") {
  ScriptedChatClient client({kGoodProgram});
  TokenLedger ledger;
  auto outcome = llm_propose({}, {}, client, ledger, 3, "");
  REQUIRE(outcome.ok);
  CHECK(outcome.requests == 1);
  CHECK(outcome.program.horizon == 2);
  CHECK(ledger.records().size() == 1);
  CHECK(ledger.records()[0].purpose == CallPurpose::Propose);
  CHECK(ledger.total_completion_tokens() > 0);
}

TEST_CASE("llm_propose strips fenced code blocks") {
  ScriptedChatClient client({"Here is my candidate:\n```\n" + kGoodProgram + "\n```\nGood luck."});
  TokenLedger ledger;
  auto outcome = llm_propose({}, {}, client, ledger, 0, "");
  REQUIRE(outcome.ok);
  CHECK(outcome.program.lets.size() == 1);
}

TEST_CASE("llm_propose re-prompts with the parse error and then succeeds") {
  ScriptedChatClient client({"let A = (((", kGoodProgram});
  TokenLedger ledger;
  auto outcome = llm_propose({}, {}, client, ledger, 3, "");
  REQUIRE(outcome.ok);
  CHECK(outcome.requests == 2);
  REQUIRE(client.requests().size() == 2);
  // The correction round carries the failed reply and the parser's complaint.
  const auto& retry = client.requests()[1].messages;
  REQUIRE(retry.size() == 4);
  CHECK(retry[2].role == "assistant");
  CHECK(retry[2].content == "let A = (((");
  CHECK(retry[3].content.find("failed to parse") != std::string::npos);
}

TEST_CASE("llm_propose gives up after the retry budget") {
  ScriptedChatClient client({"not a program at all"});
  TokenLedger ledger;
  auto outcome = llm_propose({}, {}, client, ledger, 2, "");
  CHECK(!outcome.ok);
  CHECK(outcome.requests == 3);  // initial + 2 retries
  CHECK(outcome.error.find("parse error") != std::string::npos);
  CHECK(ledger.records().size() == 3);
}

TEST_CASE("llm_propose surfaces transport failures without throwing") {
  FailingChatClient client;
  TokenLedger ledger;
  auto outcome = llm_propose({}, {}, client, ledger, 3, "");
  CHECK(!outcome.ok);
  CHECK(outcome.error.find("chat request failed") != std::string::npos);
  CHECK(ledger.records().empty());
}

TEST_CASE("propagate splits floor(alpha*N) clones and the rest fresh") {
  auto pool = make_pool(5);
  auto population = make_population(pool, 50);
  auto ancestors = draw_ancestors(population, 1);
  FixedPoolKernel kernel{&pool};
  RngStream rng(11);
  PropagateOptions opts;
  opts.iteration = 3;
  auto result = propagate(population, ancestors, 0.7, kernel, rng, opts);

  REQUIRE(result.particles.size() == 50);
  CHECK(result.n_clones == 35);
  int clones = 0;
  for (std::size_t i = 0; i < result.particles.size(); ++i) {
    if (result.is_clone[i]) ++clones;
    CHECK(result.source_index[i] < population.size());
  }
  CHECK(clones == 35);
  // Clone slots come first and preserve the donor's evaluated weight.
  std::set<std::size_t> donors;
  for (int i = 0; i < 35; ++i) {
    CHECK(result.is_clone[static_cast<std::size_t>(i)] == 1);
    const auto donor = result.source_index[static_cast<std::size_t>(i)];
    CHECK(result.particles[static_cast<std::size_t>(i)].log_weight ==
          population[donor].log_weight);
    CHECK(result.particles[static_cast<std::size_t>(i)].origin_id == population[donor].origin_id);
    donors.insert(donor);
  }
  // Enough positive-weight particles: donors are distinct.
  CHECK(donors.size() == 35);
  for (std::size_t i = 35; i < 50; ++i) {
    CHECK(result.is_clone[i] == 0);
    CHECK(result.particles[i].model.id.rfind("pool_", 0) == 0);
    // Fresh slots condition on the resampled ancestor.
    CHECK(result.source_index[i] == ancestors.indices[i]);
    // The ancestry chain ends with the ancestor itself.
    REQUIRE(!result.particles[i].ancestry.empty());
    CHECK(result.particles[i].ancestry.back().model_id ==
          population[ancestors.indices[i]].model.id);
  }
}

TEST_CASE("alpha=1 clones everything without touching the kernel") {
  auto pool = make_pool(3);
  auto population = make_population(pool, 10);
  auto ancestors = draw_ancestors(population, 2);
  FailingChatClient failing;
  TokenLedger ledger;
  LlmDslKernel kernel;
  kernel.client = &failing;
  kernel.ledger = &ledger;
  RngStream rng(12);
  auto result = propagate(population, ancestors, 1.0, ProposalKernel{kernel}, rng);
  REQUIRE(result.particles.size() == 10);
  CHECK(result.n_clones == 10);
  for (auto flag : result.is_clone) CHECK(flag == 1);
  CHECK(ledger.records().empty());  // FailingChatClient would also have thrown
}

TEST_CASE("clone slots fall back to with-replacement ancestors when the pool is thin") {
  auto pool = make_pool(3);
  auto population = make_population(pool, 10);
  // Only three particles keep positive mass.
  for (std::size_t i = 0; i < population.size(); ++i) {
    population[i].norm_weight = i < 3 ? 1.0 / 3.0 : 0.0;
    if (i >= 3) population[i].log_weight = kNegInf;
  }
  auto ancestors = draw_ancestors(population, 3);
  FixedPoolKernel kernel{&pool};
  RngStream rng(13);
  auto result = propagate(population, ancestors, 1.0, kernel, rng);
  REQUIRE(result.particles.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(result.source_index[i] == ancestors.indices[i]);
    CHECK(result.source_index[i] < 3);  // only positive-weight ancestors get resampled
  }
}

TEST_CASE("alpha=0 proposes a full fresh population") {
  auto pool = make_pool(4);
  auto population = make_population(pool, 12);
  auto ancestors = draw_ancestors(population, 4);
  FixedPoolKernel kernel{&pool};
  RngStream rng(14);
  auto result = propagate(population, ancestors, 0.0, kernel, rng);
  CHECK(result.n_clones == 0);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(result.is_clone[i] == 0);
    CHECK(result.particles[i].failed());  // fresh particles await evaluation
  }
}

TEST_CASE("clones carry zero token deltas") {
  auto pool = make_pool(2);
  auto population = make_population(pool, 4);
  for (auto& p : population) {
    p.prompt_tokens = 111;
    p.completion_tokens = 222;
  }
  auto ancestors = draw_ancestors(population, 5);
  FixedPoolKernel kernel{&pool};
  RngStream rng(15);
  auto result = propagate(population, ancestors, 1.0, kernel, rng);
  for (const auto& p : result.particles) {
    CHECK(p.prompt_tokens == 0);
    CHECK(p.completion_tokens == 0);
  }
}

TEST_CASE("llm kernel failures become failed particles with diagnostics") {
  auto pool = make_pool(2);
  auto population = make_population(pool, 6);
  auto ancestors = draw_ancestors(population, 6);
  FailingChatClient failing;
  TokenLedger ledger;
  LlmDslKernel kernel;
  kernel.client = &failing;
  kernel.ledger = &ledger;
  RngStream rng(16);
  auto result = propagate(population, ancestors, 0.0, ProposalKernel{kernel}, rng);
  for (const auto& p : result.particles) {
    CHECK(p.failed());
    CHECK(p.failure.find("proposal-failure") != std::string::npos);
  }
}

TEST_CASE("llm kernel proposals pick up the program and the token spend") {
  auto pool = make_pool(2);
  auto population = make_population(pool, 3);
  auto ancestors = draw_ancestors(population, 7);
  ScriptedChatClient client({kGoodProgram});
  TokenLedger ledger;
  LlmDslKernel kernel;
  kernel.client = &client;
  kernel.ledger = &ledger;
  kernel.param_dim = 2;
  kernel.obs_dim = 2;
  RngStream rng(17);
  PropagateOptions opts;
  opts.parallelism = 3;
  auto result = propagate(population, ancestors, 0.0, ProposalKernel{kernel}, rng, opts);
  std::int64_t particle_prompt = 0, particle_completion = 0;
  for (const auto& p : result.particles) {
    const auto* src = std::get_if<DslSource>(&p.model.representation);
    REQUIRE(src != nullptr);
    CHECK(dsl::structurally_equal(dsl::parse(src->text), dsl::parse(kGoodProgram)));
    CHECK(p.model.param_dim == 2);  // max(kernel dim, program minimum)
    CHECK(p.model.obs_dim == 2);
    particle_prompt += p.prompt_tokens;
    particle_completion += p.completion_tokens;
  }
  // Per-particle attribution folds up to exactly the shared ledger totals.
  CHECK(particle_prompt == ledger.total_prompt_tokens());
  CHECK(particle_completion == ledger.total_completion_tokens());
  CHECK(ledger.records().size() == 3);
}

TEST_CASE("bernoulli clone counts are reproducible and near alpha*N") {
  auto pool = make_pool(3);
  auto population = make_population(pool, 40);
  auto ancestors = draw_ancestors(population, 8);
  FixedPoolKernel kernel{&pool};
  PropagateOptions opts;
  opts.bernoulli_clones = true;

  double total = 0.0;
  for (std::uint64_t it = 0; it < 200; ++it) {
    opts.iteration = it;
    RngStream rng(18);
    auto result = propagate(population, ancestors, 0.7, kernel, rng, opts);
    RngStream rng2(18);
    auto again = propagate(population, ancestors, 0.7, kernel, rng2, opts);
    CHECK(result.n_clones == again.n_clones);
    total += result.n_clones;
  }
  CHECK(total / 200.0 == doctest::Approx(0.7 * 40).epsilon(0.05));
}

TEST_CASE("propagate validates its inputs") {
  auto pool = make_pool(2);
  auto population = make_population(pool, 4);
  auto ancestors = draw_ancestors(population, 9);
  FixedPoolKernel kernel{&pool};
  RngStream rng(19);
  // The ancestor draw sets the output size; indices must stay in range.
  AncestorIndices short_anc = ancestors;
  short_anc.indices.pop_back();
  CHECK(propagate(population, short_anc, 0.5, kernel, rng).particles.size() == 3);
  AncestorIndices bad = ancestors;
  bad.indices[0] = population.size();
  CHECK_THROWS_AS(propagate(population, bad, 0.5, kernel, rng), std::invalid_argument);
  AncestorIndices none;
  CHECK_THROWS_AS(propagate(population, none, 0.5, kernel, rng), std::invalid_argument);
  CHECK_THROWS_AS(propagate(population, ancestors, 1.5, kernel, rng), std::invalid_argument);
  FixedPoolKernel empty{nullptr};
  CHECK_THROWS_AS(propagate(population, ancestors, 0.0, empty, rng), std::invalid_argument);
}
