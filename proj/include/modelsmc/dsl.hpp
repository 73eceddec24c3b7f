#ifndef MODELSMC_DSL_HPP
#define MODELSMC_DSL_HPP

#include <memory>
#include <string>
#include <vector>

#include "modelsmc/rng.hpp"

namespace modelsmc::dsl {

// Restricted numeric language for proposed candidate models.
//
//   program   := { statement }
//   statement := "let" NAME "=" expr
//              | "step" NAME "=" expr
//              | "output" NAME { "," NAME } "horizon" INT
//   expr      := arithmetic over + - * / ^, parentheses, literals, symbols,
//                and builtin calls
//
// Symbols: declared state variables, parameter slots th0..th(d-1), context
// slots c0..c(d-1), and the step index t (t = 0 in `let` initializers).
// Builtins: exp, log, sqrt, abs, min, max, clamp, binom(n,p),
// normal(mu,sigma), poisson(lam).
//
// Each iteration t = 1..horizon applies the `step` updates in declaration
// order; later updates see the values already assigned in the same step, so
// a draw can be bound to a state variable and reused. The observation is the
// concatenation of each output variable's values over t = 1..horizon.

enum class BinaryOp { Add, Sub, Mul, Div, Pow };

enum class Builtin { Exp, Log, Sqrt, Abs, Min, Max, Clamp, Binom, Normal, Poisson };

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
  enum class Kind { Number, Symbol, Unary, Binary, Call };

  Kind kind;
  double number = 0.0;        // Number
  std::string symbol;         // Symbol
  BinaryOp op = BinaryOp::Add;
  Builtin builtin = Builtin::Exp;
  std::vector<ExprPtr> args;  // Unary: 1 operand; Binary: 2; Call: arity
};

struct InitDecl {
  std::string name;
  ExprPtr init;
};

struct StepDecl {
  std::string name;
  ExprPtr update;
};

struct DslProgram {
  std::vector<InitDecl> lets;
  std::vector<StepDecl> steps;
  std::vector<std::string> outputs;
  int horizon = 0;
  // Highest referenced slot index + 1, for dimension checks before running.
  int min_param_dim = 0;
  int min_context_dim = 0;
  std::string source;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line_, int col_)
      : std::runtime_error(msg + " at line " + std::to_string(line_) + ", column " +
                           std::to_string(col_)),
        line(line_),
        col(col_) {}
  int line;
  int col;
};

DslProgram parse(const std::string& source);

std::string pretty_print(const DslProgram& prog);

bool structurally_equal(const DslProgram& a, const DslProgram& b);

struct SimLimits {
  // Upper bound on horizon * (output count + step count); guards runaway
  // programs independently of the wall clock.
  long max_work = 50'000'000;
  double wall_clock_s = 10.0;
};

struct SimResult {
  bool ok = false;
  std::vector<double> x;
  std::string error;  // numeric-failure / timeout-failure diagnostics
};

SimResult simulate(const DslProgram& prog, const std::vector<double>& theta,
                   const std::vector<double>& context, RngStream& rng,
                   const SimLimits& limits = {});

// Grammar reference injected into proposal prompts.
const std::string& grammar_reference();

}  // namespace modelsmc::dsl

#endif  // MODELSMC_DSL_HPP
