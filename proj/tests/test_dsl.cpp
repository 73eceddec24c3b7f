#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <string>

#include "modelsmc/dsl.hpp"
#include "test_support.hpp"

using namespace modelsmc;
using namespace modelsmc::dsl;

namespace {

SimResult run(const std::string& src, std::vector<double> theta = {},
              std::vector<double> context = {}, std::uint64_t seed = 0) {
  DslProgram prog = parse(src);
  RngStream rng = RngStream(seed).derive(0, 0, "dsltest");
  return simulate(prog, theta, context, rng);
}

}  // namespace

TEST_CASE("deterministic programs evaluate exactly") {
  auto res = run("let A = 1\nstep A = A + 1\noutput A horizon 3");
  REQUIRE(res.ok);
  REQUIRE(res.x.size() == 3);
  CHECK(res.x[0] == 2.0);
  CHECK(res.x[1] == 3.0);
  CHECK(res.x[2] == 4.0);
}

TEST_CASE("operator precedence and right-associative power") {
  auto res = run("let A = 0\nstep A = 1 + 2 * 3 ^ 2\noutput A horizon 1");
  REQUIRE(res.ok);
  CHECK(res.x[0] == 19.0);
  res = run("let A = 0\nstep A = 2 ^ 3 ^ 2\noutput A horizon 1");
  REQUIRE(res.ok);
  CHECK(res.x[0] == 512.0);
  res = run("let A = 0\nstep A = (1 + 2) * 3\noutput A horizon 1");
  REQUIRE(res.ok);
  CHECK(res.x[0] == 9.0);
  res = run("let A = 0\nstep A = -2 ^ 2\noutput A horizon 1");
  REQUIRE(res.ok);
  // Unary minus binds looser than the power.
  CHECK(res.x[0] == -4.0);
}

TEST_CASE("the step index t is 0 in lets and 1..horizon in steps") {
  auto res = run("let A = t\nlet B = 0\nstep B = t\noutput A, B horizon 3");
  REQUIRE(res.ok);
  // Variable-major concatenation: A over t=1..3 then B over t=1..3.
  REQUIRE(res.x.size() == 6);
  CHECK(res.x[0] == 0.0);  // A never updated, keeps its t=0 init
  CHECK(res.x[3] == 1.0);
  CHECK(res.x[4] == 2.0);
  CHECK(res.x[5] == 3.0);
}

TEST_CASE("step updates apply sequentially in declaration order") {
  auto res = run("let N = 0\nlet M = 0\nstep N = 5\nstep M = N\noutput N, M horizon 1");
  REQUIRE(res.ok);
  CHECK(res.x[0] == 5.0);
  CHECK(res.x[1] == 5.0);  // M sees the freshly assigned N
}

TEST_CASE("parameters and context slots are read through th<k> and c<k>") {
  auto res = run("let A = th0 + c1\nstep A = A * th1\noutput A horizon 2", {2.0, 3.0}, {0.0, 4.0});
  REQUIRE(res.ok);
  CHECK(res.x[0] == 18.0);
  CHECK(res.x[1] == 54.0);
  DslProgram prog = parse("let A = th2 + c0\nstep A = A\noutput A horizon 1");
  CHECK(prog.min_param_dim == 3);
  CHECK(prog.min_context_dim == 1);
}

TEST_CASE("missing parameter slots are a simulation failure, not a crash") {
  auto res = run("let A = th3\nstep A = A\noutput A horizon 1", {1.0});
  CHECK(!res.ok);
  CHECK(res.error.find("parameter") != std::string::npos);
}

TEST_CASE("builtins compute standard values") {
  auto res = run(
      "let A = exp(0) + log(1) + sqrt(9) + abs(0-2) + min(1, 2) + max(1, 2) + clamp(5, 0, 3)\n"
      "step A = A\noutput A horizon 1");
  REQUIRE(res.ok);
  CHECK(res.x[0] == doctest::Approx(1.0 + 0.0 + 3.0 + 2.0 + 1.0 + 2.0 + 3.0));
}

TEST_CASE("comments and blank lines are ignored") {
  auto res = run("# header comment\nlet A = 1  # trailing\n\nstep A = A\noutput A horizon 1");
  REQUIRE(res.ok);
  CHECK(res.x[0] == 1.0);
}

TEST_CASE("parse errors carry location and reject malformed programs") {
  CHECK_THROWS_AS(parse("let = 3"), ParseError);
  CHECK_THROWS_AS(parse("let A 3"), ParseError);
  CHECK_THROWS_AS(parse("let A = 3\noutput A"), ParseError);          // missing horizon
  CHECK_THROWS_AS(parse("let A = (3\nstep A = A\noutput A horizon 1"), ParseError);
  CHECK_THROWS_AS(parse("let A = foo(3)\nstep A = A\noutput A horizon 1"), ParseError);
  CHECK_THROWS_AS(parse("step A = 1\noutput A horizon 1"), ParseError);  // step without let
  CHECK_THROWS_AS(parse("let A = 1\nlet A = 2\noutput A horizon 1"), ParseError);
  CHECK_THROWS_AS(parse("let t = 1\noutput t horizon 1"), ParseError);   // reserved
  CHECK_THROWS_AS(parse("let th0 = 1\noutput th0 horizon 1"), ParseError);
  CHECK_THROWS_AS(parse("let A = 1\noutput A horizon 0"), ParseError);
  CHECK_THROWS_AS(parse("let A = 1\noutput B horizon 1"), ParseError);  // undeclared output
  CHECK_THROWS_AS(parse("let A = B\noutput A horizon 1"), ParseError);  // unknown symbol
  CHECK_THROWS_AS(parse(""), ParseError);
  try {
    parse("let A = \n  @");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line >= 1);
  }
}

TEST_CASE("fuzzed garbage never crashes the parser") {
  RngStream rng = RngStream(99).derive(0, 0, "fuzz");
  const std::string alphabet = "letspouth0123456789+-*/^()=., \nabcxyz#";
  for (int trial = 0; trial < 500; ++trial) {
    std::string src;
    const int len = static_cast<int>(rng.uniform_int(1, 80));
    for (int i = 0; i < len; ++i) {
      src += alphabet[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(alphabet.size()) - 1))];
    }
    try {
      DslProgram prog = parse(src);
      RngStream sim_rng = RngStream(1).derive(0, 0, "fuzzsim");
      simulate(prog, {1.0, 1.0}, {1.0, 1.0}, sim_rng);
    } catch (const ParseError&) {
      // expected for most inputs
    }
  }
}

TEST_CASE("numeric failures are captured with a diagnostic") {
  auto res = run("let A = 1\nstep A = log(0 - A)\noutput A horizon 1");
  CHECK(!res.ok);
  CHECK(res.error.find("numeric-failure") != std::string::npos);
  res = run("let A = 1\nstep A = A / 0\noutput A horizon 1");
  CHECK(!res.ok);
}

TEST_CASE("runaway work is bounded") {
  DslProgram prog = parse("let A = 1\nstep A = A + 1\noutput A horizon 1000000");
  RngStream rng = RngStream(0).derive(0, 0, "work");
  SimLimits limits;
  limits.max_work = 1000;
  auto res = simulate(prog, {}, {}, rng, limits);
  CHECK(!res.ok);
  CHECK(res.error.find("failure") != std::string::npos);
}

TEST_CASE("random builtins are reproducible under the same stream") {
  DslProgram prog = parse(
      "let A = 0\nstep A = A + normal(0, 1) + binom(10, 0.5) + poisson(2)\noutput A horizon 5");
  RngStream r1 = RngStream(4).derive(0, 0, "repro");
  RngStream r2 = RngStream(4).derive(0, 0, "repro");
  auto a = simulate(prog, {}, {}, r1);
  auto b = simulate(prog, {}, {}, r2);
  REQUIRE(a.ok);
  REQUIRE(b.ok);
  CHECK(a.x == b.x);
}

TEST_CASE("binomial builtin clamps its arguments defensively") {
  auto res = run("let A = 0\nstep A = binom(10.4, 1.5) + binom(0 - 5, 0.5)\noutput A horizon 1");
  REQUIRE(res.ok);
  CHECK(res.x[0] == 10.0);  // p clamped to 1, negative n contributes 0
}

TEST_CASE("pretty_print round-trips structurally") {
  const std::string src =
      "let S = c0\nlet I = c1\nstep S = S - binom(S, 1 - exp(0 - th0 * I / (c0 + c1)))\n"
      "step I = I + 1\noutput S, I horizon 4";
  DslProgram prog = parse(src);
  std::string printed = pretty_print(prog);
  DslProgram reparsed = parse(printed);
  CHECK(structurally_equal(prog, reparsed));
  CHECK(pretty_print(reparsed) == printed);
}

TEST_CASE("structural equality ignores formatting but not structure") {
  DslProgram a = parse("let A = 1 + 2\nstep A = A\noutput A horizon 2");
  DslProgram b = parse("let A = 1   +   2 # same\nstep A = A\noutput A horizon 2");
  DslProgram c = parse("let A = 2 + 1\nstep A = A\noutput A horizon 2");
  CHECK(structurally_equal(a, b));
  CHECK(!structurally_equal(a, c));
}

TEST_CASE("grammar reference mentions every builtin") {
  const std::string& g = grammar_reference();
  for (const char* name :
       {"exp", "log", "sqrt", "abs", "min", "max", "clamp", "binom", "normal", "poisson", "let",
        "step", "output", "horizon"}) {
    CHECK(g.find(name) != std::string::npos);
  }
}
