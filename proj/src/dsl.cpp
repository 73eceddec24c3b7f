#include "modelsmc/dsl.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace modelsmc::dsl {

namespace {

constexpr int kMaxExprDepth = 64;

struct BuiltinInfo {
  Builtin id;
  int arity;
};

const std::map<std::string, BuiltinInfo, std::less<>>& builtin_table() {
  static const std::map<std::string, BuiltinInfo, std::less<>> table = {
      {"exp", {Builtin::Exp, 1}},     {"log", {Builtin::Log, 1}},
      {"sqrt", {Builtin::Sqrt, 1}},   {"abs", {Builtin::Abs, 1}},
      {"min", {Builtin::Min, 2}},     {"max", {Builtin::Max, 2}},
      {"clamp", {Builtin::Clamp, 3}}, {"binom", {Builtin::Binom, 2}},
      {"normal", {Builtin::Normal, 2}}, {"poisson", {Builtin::Poisson, 1}}};
  return table;
}

const char* builtin_name(Builtin b) {
  switch (b) {
    case Builtin::Exp: return "exp";
    case Builtin::Log: return "log";
    case Builtin::Sqrt: return "sqrt";
    case Builtin::Abs: return "abs";
    case Builtin::Min: return "min";
    case Builtin::Max: return "max";
    case Builtin::Clamp: return "clamp";
    case Builtin::Binom: return "binom";
    case Builtin::Normal: return "normal";
    case Builtin::Poisson: return "poisson";
  }
  return "?";
}

// --- Lexer -----------------------------------------------------------------

enum class TokKind { Ident, Number, Punct, Newline, End };

struct Token {
  TokKind kind;
  std::string text;
  double value = 0.0;
  int line = 1;
  int col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  Token next() {
    skip_ws();
    Token tok;
    tok.line = line_;
    tok.col = col_;
    if (pos_ >= src_.size()) {
      tok.kind = TokKind::End;
      return tok;
    }
    const char c = src_[pos_];
    if (c == '\n' || c == ';') {
      advance();
      tok.kind = TokKind::Newline;
      return tok;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      tok.kind = TokKind::Ident;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
        tok.text += src_[pos_];
        advance();
      }
      return tok;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() &&
         std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      tok.kind = TokKind::Number;
      std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
              src_[pos_] == 'e' || src_[pos_] == 'E' ||
              ((src_[pos_] == '+' || src_[pos_] == '-') && pos_ > start &&
               (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E')))) {
        advance();
      }
      tok.text = src_.substr(start, pos_ - start);
      char* end = nullptr;
      tok.value = std::strtod(tok.text.c_str(), &end);
      if (end != tok.text.c_str() + tok.text.size()) {
        throw ParseError("malformed number '" + tok.text + "'", tok.line, tok.col);
      }
      return tok;
    }
    static const std::string punct = "+-*/^(),=";
    if (punct.find(c) != std::string::npos) {
      tok.kind = TokKind::Punct;
      tok.text = std::string(1, c);
      advance();
      return tok;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
  }

 private:
  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_ws() {
    while (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == ' ' || c == '\t' || c == '\r') {
        advance();
      } else if (c == '#') {  // comment to end of line
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
      } else {
        break;
      }
    }
  }

  const std::string& src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

// --- Parser ----------------------------------------------------------------

class Parser {
 public:
  explicit Parser(const std::string& src) : lexer_(src) { cur_ = lexer_.next(); }

  DslProgram parse_program(const std::string& source) {
    DslProgram prog;
    prog.source = source;
    while (cur_.kind != TokKind::End) {
      if (cur_.kind == TokKind::Newline) {
        consume();
        continue;
      }
      if (cur_.kind != TokKind::Ident) {
        throw ParseError("expected statement keyword", cur_.line, cur_.col);
      }
      if (cur_.text == "let") {
        parse_let(prog);
      } else if (cur_.text == "step") {
        parse_step(prog);
      } else if (cur_.text == "output") {
        parse_output(prog);
      } else {
        throw ParseError("unknown statement '" + cur_.text + "'", cur_.line, cur_.col);
      }
      if (cur_.kind != TokKind::Newline && cur_.kind != TokKind::End) {
        throw ParseError("expected end of statement", cur_.line, cur_.col);
      }
    }
    validate(prog);
    return prog;
  }

 private:
  void consume() { cur_ = lexer_.next(); }

  void expect_punct(const char* p) {
    if (cur_.kind != TokKind::Punct || cur_.text != p) {
      throw ParseError(std::string("expected '") + p + "'", cur_.line, cur_.col);
    }
    consume();
  }

  std::string expect_ident() {
    if (cur_.kind != TokKind::Ident) {
      throw ParseError("expected identifier", cur_.line, cur_.col);
    }
    std::string name = cur_.text;
    consume();
    return name;
  }

  void parse_let(DslProgram& prog) {
    consume();  // let
    InitDecl decl;
    decl.name = expect_ident();
    expect_punct("=");
    decl.init = parse_expr(0);
    prog.lets.push_back(std::move(decl));
  }

  void parse_step(DslProgram& prog) {
    consume();  // step
    StepDecl decl;
    decl.name = expect_ident();
    expect_punct("=");
    decl.update = parse_expr(0);
    prog.steps.push_back(std::move(decl));
  }

  void parse_output(DslProgram& prog) {
    const Token at = cur_;
    consume();  // output
    if (!prog.outputs.empty()) {
      throw ParseError("duplicate output statement", at.line, at.col);
    }
    prog.outputs.push_back(expect_ident());
    while (cur_.kind == TokKind::Punct && cur_.text == ",") {
      consume();
      prog.outputs.push_back(expect_ident());
    }
    if (cur_.kind != TokKind::Ident || cur_.text != "horizon") {
      throw ParseError("expected 'horizon'", cur_.line, cur_.col);
    }
    consume();
    if (cur_.kind != TokKind::Number) {
      throw ParseError("expected horizon count", cur_.line, cur_.col);
    }
    const double h = cur_.value;
    if (h < 1.0 || h != std::floor(h)) {
      throw ParseError("horizon must be a positive integer", cur_.line, cur_.col);
    }
    prog.horizon = static_cast<int>(h);
    consume();
  }

  // Precedence climbing; ^ binds tightest and is right-associative.
  ExprPtr parse_expr(int depth, int min_prec = 0) {
    if (depth > kMaxExprDepth) {
      throw ParseError("expression too deeply nested", cur_.line, cur_.col);
    }
    ExprPtr lhs = parse_unary(depth);
    for (;;) {
      if (cur_.kind != TokKind::Punct) break;
      int prec;
      BinaryOp op;
      if (cur_.text == "+") { prec = 1; op = BinaryOp::Add; }
      else if (cur_.text == "-") { prec = 1; op = BinaryOp::Sub; }
      else if (cur_.text == "*") { prec = 2; op = BinaryOp::Mul; }
      else if (cur_.text == "/") { prec = 2; op = BinaryOp::Div; }
      else if (cur_.text == "^") { prec = 3; op = BinaryOp::Pow; }
      else break;
      if (prec < min_prec) break;
      consume();
      const int next_min = op == BinaryOp::Pow ? prec : prec + 1;
      ExprPtr rhs = parse_expr(depth + 1, next_min);
      auto node = std::make_unique<Expr>();
      node->kind = Expr::Kind::Binary;
      node->op = op;
      node->args.push_back(std::move(lhs));
      node->args.push_back(std::move(rhs));
      lhs = std::move(node);
    }
    return lhs;
  }

  ExprPtr parse_unary(int depth) {
    if (depth > kMaxExprDepth) {
      throw ParseError("expression too deeply nested", cur_.line, cur_.col);
    }
    if (cur_.kind == TokKind::Punct && cur_.text == "-") {
      consume();
      auto node = std::make_unique<Expr>();
      node->kind = Expr::Kind::Unary;
      // Negation binds looser than '^' (so -2^2 is -(2^2)) but tighter than
      // the other binary operators.
      node->args.push_back(parse_expr(depth + 1, 3));
      return node;
    }
    return parse_primary(depth);
  }

  ExprPtr parse_primary(int depth) {
    if (cur_.kind == TokKind::Number) {
      auto node = std::make_unique<Expr>();
      node->kind = Expr::Kind::Number;
      node->number = cur_.value;
      consume();
      return node;
    }
    if (cur_.kind == TokKind::Punct && cur_.text == "(") {
      consume();
      ExprPtr inner = parse_expr(depth + 1);
      expect_punct(")");
      return inner;
    }
    if (cur_.kind == TokKind::Ident) {
      const Token at = cur_;
      std::string name = cur_.text;
      consume();
      if (cur_.kind == TokKind::Punct && cur_.text == "(") {
        const auto it = builtin_table().find(name);
        if (it == builtin_table().end()) {
          throw ParseError("unknown builtin '" + name + "'", at.line, at.col);
        }
        consume();
        auto node = std::make_unique<Expr>();
        node->kind = Expr::Kind::Call;
        node->builtin = it->second.id;
        if (!(cur_.kind == TokKind::Punct && cur_.text == ")")) {
          node->args.push_back(parse_expr(depth + 1));
          while (cur_.kind == TokKind::Punct && cur_.text == ",") {
            consume();
            node->args.push_back(parse_expr(depth + 1));
          }
        }
        expect_punct(")");
        if (static_cast<int>(node->args.size()) != it->second.arity) {
          throw ParseError("builtin '" + name + "' expects " +
                               std::to_string(it->second.arity) + " argument(s)",
                           at.line, at.col);
        }
        return node;
      }
      auto node = std::make_unique<Expr>();
      node->kind = Expr::Kind::Symbol;
      node->symbol = std::move(name);
      return node;
    }
    throw ParseError("expected expression", cur_.line, cur_.col);
  }

  // Slot symbols are th<k> / c<k> with a bare decimal index.
  static std::optional<int> slot_index(const std::string& sym, const char* prefix) {
    const std::size_t n = std::string(prefix).size();
    if (sym.size() <= n || sym.compare(0, n, prefix) != 0) return std::nullopt;
    int idx = 0;
    for (std::size_t i = n; i < sym.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(sym[i]))) return std::nullopt;
      idx = idx * 10 + (sym[i] - '0');
      if (idx > 100000) return std::nullopt;
    }
    return idx;
  }

  void check_symbols(const Expr& e, const DslProgram& prog) {
    switch (e.kind) {
      case Expr::Kind::Symbol: {
        const std::string& s = e.symbol;
        if (s == "t") return;
        if (auto idx = slot_index(s, "th")) {
          prog_min_param_ = std::max(prog_min_param_, *idx + 1);
          return;
        }
        if (auto idx = slot_index(s, "c")) {
          prog_min_context_ = std::max(prog_min_context_, *idx + 1);
          return;
        }
        for (const auto& d : prog.lets) {
          if (d.name == s) return;
        }
        throw ParseError("unknown symbol '" + s + "'", 1, 1);
      }
      default:
        for (const auto& a : e.args) check_symbols(*a, prog);
    }
  }

  void validate(DslProgram& prog) {
    if (prog.outputs.empty()) {
      throw ParseError("program has no output statement", 1, 1);
    }
    for (const auto& s : prog.steps) {
      bool declared = false;
      for (const auto& d : prog.lets) declared |= d.name == s.name;
      if (!declared) {
        throw ParseError("step target '" + s.name + "' has no let declaration", 1, 1);
      }
    }
    for (std::size_t i = 0; i < prog.steps.size(); ++i) {
      for (std::size_t j = i + 1; j < prog.steps.size(); ++j) {
        if (prog.steps[i].name == prog.steps[j].name) {
          throw ParseError("duplicate step for '" + prog.steps[i].name + "'", 1, 1);
        }
      }
    }
    for (std::size_t i = 0; i < prog.lets.size(); ++i) {
      for (std::size_t j = i + 1; j < prog.lets.size(); ++j) {
        if (prog.lets[i].name == prog.lets[j].name) {
          throw ParseError("duplicate let for '" + prog.lets[i].name + "'", 1, 1);
        }
      }
    }
    for (const auto& d : prog.lets) {
      if (d.name == "t" || slot_index(d.name, "th") || slot_index(d.name, "c")) {
        throw ParseError("'" + d.name + "' is a reserved symbol", 1, 1);
      }
    }
    for (const auto& o : prog.outputs) {
      bool declared = false;
      for (const auto& d : prog.lets) declared |= d.name == o;
      if (!declared) {
        throw ParseError("output variable '" + o + "' has no let declaration", 1, 1);
      }
    }
    for (const auto& d : prog.lets) check_symbols(*d.init, prog);
    for (const auto& s : prog.steps) check_symbols(*s.update, prog);
    prog.min_param_dim = prog_min_param_;
    prog.min_context_dim = prog_min_context_;
  }

  Lexer lexer_;
  Token cur_;
  int prog_min_param_ = 0;
  int prog_min_context_ = 0;
};

// --- Pretty printer --------------------------------------------------------

int op_prec(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add:
    case BinaryOp::Sub: return 1;
    case BinaryOp::Mul:
    case BinaryOp::Div: return 2;
    case BinaryOp::Pow: return 3;
  }
  return 0;
}

const char* op_text(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return " + ";
    case BinaryOp::Sub: return " - ";
    case BinaryOp::Mul: return " * ";
    case BinaryOp::Div: return " / ";
    case BinaryOp::Pow: return " ^ ";
  }
  return "?";
}

void print_expr(std::ostream& os, const Expr& e, int parent_prec, bool rhs_of_parent) {
  switch (e.kind) {
    case Expr::Kind::Number: {
      std::ostringstream tmp;
      tmp.precision(17);
      tmp << e.number;
      os << tmp.str();
      break;
    }
    case Expr::Kind::Symbol:
      os << e.symbol;
      break;
    case Expr::Kind::Unary:
      os << "-";
      print_expr(os, *e.args[0], 4, false);
      break;
    case Expr::Kind::Binary: {
      const int prec = op_prec(e.op);
      // Parenthesize when binding looser than the parent, or when we are a
      // same-precedence right operand of a left-associative operator.
      const bool need_parens =
          prec < parent_prec || (prec == parent_prec && rhs_of_parent && e.op != BinaryOp::Pow);
      if (need_parens) os << "(";
      print_expr(os, *e.args[0], prec, false);
      os << op_text(e.op);
      print_expr(os, *e.args[1], prec, true);
      if (need_parens) os << ")";
      break;
    }
    case Expr::Kind::Call: {
      os << builtin_name(e.builtin) << "(";
      for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) os << ", ";
        print_expr(os, *e.args[i], 0, false);
      }
      os << ")";
      break;
    }
  }
}

bool expr_equal(const Expr& a, const Expr& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Expr::Kind::Number: return a.number == b.number;
    case Expr::Kind::Symbol: return a.symbol == b.symbol;
    case Expr::Kind::Binary:
      if (a.op != b.op) return false;
      break;
    case Expr::Kind::Call:
      if (a.builtin != b.builtin) return false;
      break;
    case Expr::Kind::Unary:
      break;
  }
  if (a.args.size() != b.args.size()) return false;
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!expr_equal(*a.args[i], *b.args[i])) return false;
  }
  return true;
}

// --- Interpreter -----------------------------------------------------------

struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Evaluator {
 public:
  Evaluator(const std::vector<double>& theta, const std::vector<double>& context,
            RngStream& rng)
      : theta_(theta), context_(context), rng_(rng) {}

  std::map<std::string, double> state;
  double t = 0.0;

  double eval(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::Number:
        return e.number;
      case Expr::Kind::Symbol:
        return lookup(e.symbol);
      case Expr::Kind::Unary:
        return -eval(*e.args[0]);
      case Expr::Kind::Binary: {
        const double a = eval(*e.args[0]);
        const double b = eval(*e.args[1]);
        switch (e.op) {
          case BinaryOp::Add: return a + b;
          case BinaryOp::Sub: return a - b;
          case BinaryOp::Mul: return a * b;
          case BinaryOp::Div: return a / b;
          case BinaryOp::Pow: return std::pow(a, b);
        }
        return 0.0;
      }
      case Expr::Kind::Call:
        return call(e);
    }
    return 0.0;
  }

 private:
  double lookup(const std::string& sym) {
    if (sym == "t") return t;
    const auto it = state.find(sym);
    if (it != state.end()) return it->second;
    if (sym.size() > 2 && sym[0] == 't' && sym[1] == 'h') {
      const std::size_t idx = std::strtoul(sym.c_str() + 2, nullptr, 10);
      if (idx >= theta_.size()) throw NumericFailure("parameter slot " + sym + " out of range");
      return theta_[idx];
    }
    if (sym.size() > 1 && sym[0] == 'c') {
      const std::size_t idx = std::strtoul(sym.c_str() + 1, nullptr, 10);
      if (idx >= context_.size()) throw NumericFailure("context slot " + sym + " out of range");
      return context_[idx];
    }
    throw NumericFailure("unbound symbol " + sym);
  }

  double call(const Expr& e) {
    switch (e.builtin) {
      case Builtin::Exp: return std::exp(eval(*e.args[0]));
      case Builtin::Log: return std::log(eval(*e.args[0]));
      case Builtin::Sqrt: return std::sqrt(eval(*e.args[0]));
      case Builtin::Abs: return std::abs(eval(*e.args[0]));
      case Builtin::Min: return std::min(eval(*e.args[0]), eval(*e.args[1]));
      case Builtin::Max: return std::max(eval(*e.args[0]), eval(*e.args[1]));
      case Builtin::Clamp: {
        const double v = eval(*e.args[0]);
        const double lo = eval(*e.args[1]);
        const double hi = eval(*e.args[2]);
        return std::min(std::max(v, lo), hi);
      }
      case Builtin::Binom: {
        const double n_raw = eval(*e.args[0]);
        double p = eval(*e.args[1]);
        if (!std::isfinite(n_raw)) throw NumericFailure("binom count is not finite");
        const double n_rounded = std::round(n_raw);
        if (n_rounded > 1e7) throw NumericFailure("binom count exceeds 1e7");
        p = std::min(std::max(p, 0.0), 1.0);
        return static_cast<double>(
            rng_.binomial(static_cast<std::int64_t>(std::max(n_rounded, 0.0)), p));
      }
      case Builtin::Normal: {
        const double mu = eval(*e.args[0]);
        const double sigma = eval(*e.args[1]);
        return rng_.normal(mu, std::abs(sigma));
      }
      case Builtin::Poisson: {
        const double lam = eval(*e.args[0]);
        if (!std::isfinite(lam)) throw NumericFailure("poisson rate is not finite");
        if (lam > 1e7) throw NumericFailure("poisson rate exceeds 1e7");
        return static_cast<double>(rng_.poisson(lam));
      }
    }
    return 0.0;
  }

  const std::vector<double>& theta_;
  const std::vector<double>& context_;
  RngStream& rng_;
};

}  // namespace

DslProgram parse(const std::string& source) {
  Parser parser(source);
  return parser.parse_program(source);
}

std::string pretty_print(const DslProgram& prog) {
  std::ostringstream os;
  for (const auto& d : prog.lets) {
    os << "let " << d.name << " = ";
    print_expr(os, *d.init, 0, false);
    os << "\n";
  }
  for (const auto& s : prog.steps) {
    os << "step " << s.name << " = ";
    print_expr(os, *s.update, 0, false);
    os << "\n";
  }
  os << "output ";
  for (std::size_t i = 0; i < prog.outputs.size(); ++i) {
    if (i) os << ", ";
    os << prog.outputs[i];
  }
  os << " horizon " << prog.horizon << "\n";
  return os.str();
}

bool structurally_equal(const DslProgram& a, const DslProgram& b) {
  if (a.lets.size() != b.lets.size() || a.steps.size() != b.steps.size() ||
      a.outputs != b.outputs || a.horizon != b.horizon) {
    return false;
  }
  for (std::size_t i = 0; i < a.lets.size(); ++i) {
    if (a.lets[i].name != b.lets[i].name || !expr_equal(*a.lets[i].init, *b.lets[i].init)) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    if (a.steps[i].name != b.steps[i].name ||
        !expr_equal(*a.steps[i].update, *b.steps[i].update)) {
      return false;
    }
  }
  return true;
}

SimResult simulate(const DslProgram& prog, const std::vector<double>& theta,
                   const std::vector<double>& context, RngStream& rng,
                   const SimLimits& limits) {
  SimResult result;
  if (static_cast<int>(theta.size()) < prog.min_param_dim) {
    result.error = "parameter vector shorter than referenced slots";
    return result;
  }
  if (static_cast<int>(context.size()) < prog.min_context_dim) {
    result.error = "context vector shorter than referenced slots";
    return result;
  }
  const long work = static_cast<long>(prog.horizon) *
                    static_cast<long>(prog.steps.size() + prog.outputs.size() + 1);
  if (work > limits.max_work) {
    result.error = "timeout-failure: declared horizon exceeds the step budget";
    return result;
  }

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration<double>(limits.wall_clock_s);
  Evaluator ev(theta, context, rng);
  try {
    for (const auto& d : prog.lets) {
      const double v = ev.eval(*d.init);
      if (!std::isfinite(v)) {
        throw NumericFailure("initializer of " + d.name + " is not finite");
      }
      ev.state[d.name] = v;
    }
    std::vector<std::vector<double>> series(prog.outputs.size());
    for (auto& s : series) s.reserve(static_cast<std::size_t>(prog.horizon));
    for (int t = 1; t <= prog.horizon; ++t) {
      ev.t = static_cast<double>(t);
      // Updates apply in declaration order within the step.
      for (const auto& s : prog.steps) {
        const double v = ev.eval(*s.update);
        if (!std::isfinite(v)) {
          throw NumericFailure("state variable " + s.name + " became non-finite at t=" +
                               std::to_string(t));
        }
        ev.state[s.name] = v;
      }
      for (std::size_t i = 0; i < prog.outputs.size(); ++i) {
        series[i].push_back(ev.state[prog.outputs[i]]);
      }
      if ((t & 0xff) == 0 && std::chrono::steady_clock::now() > deadline) {
        result.error = "timeout-failure: wall clock budget exceeded";
        return result;
      }
    }
    for (const auto& s : series) {
      result.x.insert(result.x.end(), s.begin(), s.end());
    }
    result.ok = true;
  } catch (const NumericFailure& e) {
    result.error = std::string("numeric-failure: ") + e.what();
    result.x.clear();
  }
  return result;
}

const std::string& grammar_reference() {
  static const std::string text =
      "Model programs use this restricted numeric language:\n"
      "  let NAME = EXPR        declare a state variable and its initial value\n"
      "  step NAME = EXPR       update rule applied at every time step\n"
      "  output NAME[, ...] horizon INT   variables to emit and the number of steps\n"
      "EXPR supports + - * / ^, parentheses, numeric literals, declared state\n"
      "variables, parameter slots th0, th1, ..., context slots c0, c1, ..., the\n"
      "step index t, and the builtins exp, log, sqrt, abs, min(a,b), max(a,b),\n"
      "clamp(v,lo,hi), binom(n,p), normal(mu,sigma), poisson(lam).\n"
      "Step updates apply in declaration order: a later step sees the values\n"
      "already assigned during the current step, so intermediate quantities\n"
      "(for example a random draw used twice) can be bound to their own state\n"
      "variable updated first. The observation is each output variable's value\n"
      "at t = 1..horizon, concatenated variable by variable.\n";
  return text;
}

}  // namespace modelsmc::dsl
