#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "evolattice/sha256.hpp"
#include "evolattice/value.hpp"

namespace evolattice {

// Expression language for alternatives. Grammar (see docs/expression_language.md):
//
//   lambda    := "lambda" [ident {"," ident}] ":" expr
//   expr      := term {("+"|"-") term}
//   term      := unary {("*"|"/") unary}
//   unary     := "-" unary | power
//   power     := primary ["**" unary]
//   primary   := number | ident ["(" [expr {"," expr}] ")"] | "(" expr ")"
//
// Pure expressions only: no statements, assignments, strings, or comparisons.

struct SyntaxError : std::runtime_error {
  SyntaxError(int line_, int column_, const std::string& reason_)
      : std::runtime_error("syntax error at " + std::to_string(line_) + ":" +
                           std::to_string(column_) + ": " + reason_),
        line(line_),
        column(column_),
        reason(reason_) {}
  int line;
  int column;
  std::string reason;
};

struct UnknownFunction : std::runtime_error {
  UnknownFunction(const std::string& name_, int line_, int column_)
      : std::runtime_error("unknown function '" + name_ + "' at " + std::to_string(line_) +
                           ":" + std::to_string(column_)),
        name(name_),
        line(line_),
        column(column_) {}
  std::string name;
  int line;
  int column;
};

struct UndeclaredParameter : std::runtime_error {
  UndeclaredParameter(const std::string& name_, int line_, int column_)
      : std::runtime_error("undeclared parameter '" + name_ + "' at " +
                           std::to_string(line_) + ":" + std::to_string(column_)),
        name(name_),
        line(line_),
        column(column_) {}
  std::string name;
  int line;
  int column;
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Literal, Param, Unary, Binary, Call };
  Kind kind = Kind::Literal;
  double literal = 0.0;
  std::string name;          // parameter or function name
  std::string literal_text;  // literal spelled as written
  char op = 0;               // '+', '-', '*', '/', 'p' (power)
  std::vector<ExprPtr> args;
};

struct ParsedLambda {
  std::vector<std::string> params;
  ExprPtr body;
  std::vector<std::string> warnings;  // e.g. unused parameters
};

inline bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  if (!(s[0] >= 'a' && s[0] <= 'z')) return false;
  for (char c : s)
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Builtin table
// ---------------------------------------------------------------------------

struct BuiltinInfo {
  size_t min_arity;
  size_t max_arity;  // SIZE_MAX for variadic
};

inline const std::vector<std::pair<std::string, BuiltinInfo>>& builtin_table() {
  static const std::vector<std::pair<std::string, BuiltinInfo>> table = {
      {"tanh", {1, 1}},     {"sigmoid", {1, 1}},  {"exp", {1, 1}},
      {"log", {1, 1}},      {"log1p", {1, 1}},    {"sqrt", {1, 1}},
      {"abs", {1, 1}},      {"sign", {1, 1}},     {"clamp", {3, 3}},
      {"mean", {1, 1}},     {"var", {1, 1}},      {"std", {1, 1}},
      {"sum", {1, 1}},      {"min", {1, 1}},      {"max", {1, 1}},
      {"topk", {2, 2}},     {"normalize", {1, 1}},{"softmax", {1, 1}},
      {"entropy", {1, 1}},  {"pow", {2, 2}},      {"stack", {1, SIZE_MAX}},
  };
  return table;
}

inline const BuiltinInfo* find_builtin(const std::string& name) {
  for (const auto& [n, info] : builtin_table())
    if (n == name) return &info;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

namespace detail {

struct Token {
  enum class Kind { Ident, Number, Symbol, End };
  Kind kind = Kind::End;
  std::string text;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_ws();
      Token t;
      t.line = line_;
      t.column = col_;
      if (pos_ >= src_.size()) {
        t.kind = Token::Kind::End;
        out.push_back(t);
        return out;
      }
      char c = src_[pos_];
      if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
        t.kind = Token::Kind::Ident;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                      src_[pos_] == '_')) {
          t.text.push_back(src_[pos_]);
          advance();
        }
      } else if ((c >= '0' && c <= '9') || (c == '.' && pos_ + 1 < src_.size() &&
                                            std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
        t.kind = Token::Kind::Number;
        lex_number(t);
      } else if (c == '*' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '*') {
        t.kind = Token::Kind::Symbol;
        t.text = "**";
        advance();
        advance();
      } else if (std::string_view("+-*/(),:").find(c) != std::string_view::npos) {
        t.kind = Token::Kind::Symbol;
        t.text = std::string(1, c);
        advance();
      } else {
        throw SyntaxError(line_, col_, std::string("unexpected character '") + c + "'");
      }
      out.push_back(std::move(t));
    }
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
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) advance();
  }

  void lex_number(Token& t) {
    bool seen_dot = false;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (std::isdigit(static_cast<unsigned char>(c))) {
        t.text.push_back(c);
        advance();
      } else if (c == '.' && !seen_dot) {
        seen_dot = true;
        t.text.push_back(c);
        advance();
      } else if ((c == 'e' || c == 'E') && !t.text.empty()) {
        size_t save = pos_;
        int save_line = line_, save_col = col_;
        std::string exp_part(1, c);
        advance();
        if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) {
          exp_part.push_back(src_[pos_]);
          advance();
        }
        if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
          while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
            exp_part.push_back(src_[pos_]);
            advance();
          }
          t.text += exp_part;
        } else {
          // Not an exponent; rewind.
          pos_ = save;
          line_ = save_line;
          col_ = save_col;
          return;
        }
        return;
      } else {
        return;
      }
    }
  }

  std::string_view src_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

// ---------------------------------------------------------------------------
// Parser (recursive descent)
// ---------------------------------------------------------------------------

class Parser {
 public:
  Parser(std::vector<Token> tokens, const std::vector<std::string>* declared)
      : tokens_(std::move(tokens)), declared_(declared) {}

  ParsedLambda parse_lambda() {
    ParsedLambda out;
    const Token& kw = peek();
    if (!(kw.kind == Token::Kind::Ident && kw.text == "lambda"))
      throw SyntaxError(kw.line, kw.column, "expected 'lambda'");
    next();
    while (peek().kind == Token::Kind::Ident) {
      const Token& p = peek();
      if (!valid_identifier(p.text))
        throw SyntaxError(p.line, p.column, "parameter '" + p.text + "' is not a valid identifier");
      if (std::find(out.params.begin(), out.params.end(), p.text) != out.params.end())
        throw SyntaxError(p.line, p.column, "duplicate parameter '" + p.text + "'");
      out.params.push_back(p.text);
      next();
      if (peek().kind == Token::Kind::Symbol && peek().text == ",") {
        next();
        if (peek().kind != Token::Kind::Ident)
          throw SyntaxError(peek().line, peek().column, "expected parameter name after ','");
      } else {
        break;
      }
    }
    if (!(peek().kind == Token::Kind::Symbol && peek().text == ":"))
      throw SyntaxError(peek().line, peek().column, "expected ':' after parameter list");
    next();
    declared_ = &out.params;
    out.body = parse_expr();
    expect_end();
    // Unused parameters are tolerated (they still declare a dependency) but reported.
    for (const auto& p : out.params)
      if (!used_.count(p)) out.warnings.push_back("unused parameter '" + p + "'");
    return out;
  }

 private:
  const Token& peek() const { return tokens_[pos_]; }
  const Token& next() { return tokens_[pos_++]; }

  void expect_end() {
    if (peek().kind != Token::Kind::End)
      throw SyntaxError(peek().line, peek().column, "unexpected trailing input '" + peek().text + "'");
  }

  ExprPtr parse_expr() {
    ExprPtr lhs = parse_term();
    while (peek().kind == Token::Kind::Symbol && (peek().text == "+" || peek().text == "-")) {
      char op = next().text[0];
      ExprPtr rhs = parse_term();
      lhs = make_binary(op, lhs, rhs);
    }
    return lhs;
  }

  ExprPtr parse_term() {
    ExprPtr lhs = parse_unary();
    while (peek().kind == Token::Kind::Symbol && (peek().text == "*" || peek().text == "/")) {
      char op = next().text[0];
      ExprPtr rhs = parse_unary();
      lhs = make_binary(op, lhs, rhs);
    }
    return lhs;
  }

  ExprPtr parse_unary() {
    if (peek().kind == Token::Kind::Symbol && peek().text == "-") {
      next();
      ExprPtr inner = parse_unary();
      auto e = std::make_shared<Expr>();
      e->kind = Expr::Kind::Unary;
      e->op = '-';
      e->args.push_back(std::move(inner));
      return e;
    }
    return parse_power();
  }

  ExprPtr parse_power() {
    ExprPtr base = parse_primary();
    if (peek().kind == Token::Kind::Symbol && peek().text == "**") {
      next();
      ExprPtr exponent = parse_unary();  // right-associative, allows 2**-3
      return make_binary('p', base, exponent);
    }
    return base;
  }

  ExprPtr parse_primary() {
    const Token& t = peek();
    if (t.kind == Token::Kind::Number) {
      next();
      auto e = std::make_shared<Expr>();
      e->kind = Expr::Kind::Literal;
      try {
        e->literal = std::stod(t.text);
      } catch (const std::exception&) {
        throw SyntaxError(t.line, t.column, "number out of range: " + t.text);
      }
      e->literal_text = t.text;
      return e;
    }
    if (t.kind == Token::Kind::Symbol && t.text == "(") {
      next();
      ExprPtr inner = parse_expr();
      if (!(peek().kind == Token::Kind::Symbol && peek().text == ")"))
        throw SyntaxError(peek().line, peek().column, "expected ')'");
      next();
      return inner;
    }
    if (t.kind == Token::Kind::Ident) {
      Token id = next();
      if (peek().kind == Token::Kind::Symbol && peek().text == "(") {
        next();
        const BuiltinInfo* info = find_builtin(id.text);
        if (info == nullptr) throw UnknownFunction(id.text, id.line, id.column);
        auto e = std::make_shared<Expr>();
        e->kind = Expr::Kind::Call;
        e->name = id.text;
        if (peek().kind == Token::Kind::Symbol && peek().text == ")") {
          next();
        } else {
          while (true) {
            e->args.push_back(parse_expr());
            if (peek().kind == Token::Kind::Symbol && peek().text == ",") {
              next();
              continue;
            }
            if (peek().kind == Token::Kind::Symbol && peek().text == ")") {
              next();
              break;
            }
            throw SyntaxError(peek().line, peek().column, "expected ',' or ')' in argument list");
          }
        }
        if (e->args.size() < info->min_arity ||
            (info->max_arity != SIZE_MAX && e->args.size() > info->max_arity))
          throw ArityError(id.text, info->min_arity, info->max_arity, e->args.size());
        return e;
      }
      if (id.text == "lambda")
        throw SyntaxError(id.line, id.column, "'lambda' is a reserved word");
      if (declared_ != nullptr &&
          std::find(declared_->begin(), declared_->end(), id.text) == declared_->end())
        throw UndeclaredParameter(id.text, id.line, id.column);
      used_.insert(id.text);
      auto e = std::make_shared<Expr>();
      e->kind = Expr::Kind::Param;
      e->name = id.text;
      return e;
    }
    throw SyntaxError(t.line, t.column, "expected expression");
  }

  static ExprPtr make_binary(char op, ExprPtr lhs, ExprPtr rhs) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Binary;
    e->op = op;
    e->args.push_back(std::move(lhs));
    e->args.push_back(std::move(rhs));
    return e;
  }

  std::vector<Token> tokens_;
  size_t pos_ = 0;
  const std::vector<std::string>* declared_;
  std::set<std::string> used_;
};

}  // namespace detail

inline ParsedLambda parse_lambda(std::string_view source) {
  detail::Lexer lex(source);
  detail::Parser parser(lex.run(), nullptr);
  return parser.parse_lambda();
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace detail {

inline void check_finite(const Value& v, const char* op) {
  if (!v.all_finite()) throw NumericError(op, "non-finite result");
}

template <typename F>
Value elementwise1(const Value& a, F f, const char* op) {
  if (a.is_scalar()) {
    Value r(f(a.scalar()));
    check_finite(r, op);
    return r;
  }
  std::vector<double> out;
  out.reserve(a.vec().size());
  for (double x : a.vec()) out.push_back(f(x));
  Value r(std::move(out));
  check_finite(r, op);
  return r;
}

template <typename F>
Value elementwise2(const Value& a, const Value& b, F f, const char* op) {
  if (a.is_scalar() && b.is_scalar()) {
    Value r(f(a.scalar(), b.scalar()));
    check_finite(r, op);
    return r;
  }
  size_t n = a.is_vector() ? a.vec().size() : b.vec().size();
  if (a.is_vector() && b.is_vector() && a.vec().size() != b.vec().size())
    throw TypeError("vectors of equal length for '" + std::string(op) + "'",
                    std::to_string(a.vec().size()) + " vs " + std::to_string(b.vec().size()));
  std::vector<double> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i)
    out.push_back(f(a.is_vector() ? a.vec()[i] : a.scalar(),
                    b.is_vector() ? b.vec()[i] : b.scalar()));
  Value r(std::move(out));
  check_finite(r, op);
  return r;
}

inline const std::vector<double>& as_vec_view(const Value& v, std::vector<double>& scratch) {
  if (v.is_vector()) return v.vec();
  scratch.assign(1, v.scalar());
  return scratch;
}

inline double reduce_mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double reduce_var(const std::vector<double>& xs) {
  double m = reduce_mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size());  // population convention
}

inline Value call_builtin(const std::string& name, const std::vector<Value>& args);

}  // namespace detail

inline Value evaluate(const Expr& node, const Env& env) {
  using detail::elementwise1;
  using detail::elementwise2;
  switch (node.kind) {
    case Expr::Kind::Literal:
      return Value(node.literal);
    case Expr::Kind::Param: {
      auto it = env.find(node.name);
      if (it == env.end()) throw MissingInput(node.name);
      return it->second;
    }
    case Expr::Kind::Unary: {
      Value a = evaluate(*node.args[0], env);
      return elementwise1(a, [](double x) { return -x; }, "negate");
    }
    case Expr::Kind::Binary: {
      Value a = evaluate(*node.args[0], env);
      Value b = evaluate(*node.args[1], env);
      switch (node.op) {
        case '+':
          return elementwise2(a, b, [](double x, double y) { return x + y; }, "+");
        case '-':
          return elementwise2(a, b, [](double x, double y) { return x - y; }, "-");
        case '*':
          return elementwise2(a, b, [](double x, double y) { return x * y; }, "*");
        case '/':
          return elementwise2(
              a, b,
              [](double x, double y) {
                if (y == 0.0) throw NumericError("/", "division by zero");
                return x / y;
              },
              "/");
        case 'p':
          return detail::call_builtin("pow", {a, b});
        default:
          throw NumericError("binary", "unknown operator");
      }
    }
    case Expr::Kind::Call: {
      std::vector<Value> args;
      args.reserve(node.args.size());
      for (const auto& a : node.args) args.push_back(evaluate(*a, env));
      return detail::call_builtin(node.name, args);
    }
  }
  throw NumericError("evaluate", "corrupt expression node");
}

namespace detail {

inline Value call_builtin(const std::string& name, const std::vector<Value>& args) {
  std::vector<double> scratch;
  if (name == "tanh")
    return elementwise1(args[0], [](double x) { return std::tanh(x); }, "tanh");
  if (name == "sigmoid")
    return elementwise1(args[0], [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, "sigmoid");
  if (name == "exp")
    return elementwise1(args[0], [](double x) { return std::exp(x); }, "exp");
  if (name == "log")
    return elementwise1(
        args[0],
        [](double x) {
          if (x <= 0.0) throw NumericError("log", "argument <= 0");
          return std::log(x);
        },
        "log");
  if (name == "log1p")
    return elementwise1(
        args[0],
        [](double x) {
          if (x <= -1.0) throw NumericError("log1p", "argument <= -1");
          return std::log1p(x);
        },
        "log1p");
  if (name == "sqrt")
    return elementwise1(
        args[0],
        [](double x) {
          if (x < 0.0) throw NumericError("sqrt", "argument < 0");
          return std::sqrt(x);
        },
        "sqrt");
  if (name == "abs")
    return elementwise1(args[0], [](double x) { return std::fabs(x); }, "abs");
  if (name == "sign")
    return elementwise1(args[0], [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); },
                        "sign");
  if (name == "clamp") {
    if (!args[1].is_scalar() || !args[2].is_scalar())
      throw TypeError("scalar clamp bounds", "vector bound");
    double lo = args[1].scalar(), hi = args[2].scalar();
    if (lo > hi) throw NumericError("clamp", "lo > hi");
    return elementwise1(args[0], [lo, hi](double x) { return std::clamp(x, lo, hi); }, "clamp");
  }
  if (name == "pow")
    return elementwise2(
        args[0], args[1],
        [](double x, double p) {
          double r = std::pow(x, p);
          if (std::isnan(r)) throw NumericError("pow", "undefined result");
          return r;
        },
        "pow");
  if (name == "mean" || name == "var" || name == "std" || name == "sum" || name == "min" ||
      name == "max") {
    if (args[0].is_scalar()) {
      // Reductions act as identity on scalars, except var/std which are 0.
      if (name == "var" || name == "std") return Value(0.0);
      return args[0];
    }
    const auto& xs = args[0].vec();
    if (xs.empty()) throw NumericError(name, "empty vector");
    if (name == "mean") return Value(reduce_mean(xs));
    if (name == "var") return Value(reduce_var(xs));
    if (name == "std") return Value(std::sqrt(reduce_var(xs)));
    if (name == "sum") return Value(std::accumulate(xs.begin(), xs.end(), 0.0));
    if (name == "min") return Value(*std::min_element(xs.begin(), xs.end()));
    return Value(*std::max_element(xs.begin(), xs.end()));
  }
  if (name == "topk") {
    if (!args[0].is_vector()) throw TypeError("vector for topk", "scalar");
    if (!args[1].is_scalar()) throw TypeError("scalar k for topk", "vector");
    const auto& xs = args[0].vec();
    long long k = std::llround(args[1].scalar());
    if (k < 1) throw NumericError("topk", "k < 1");
    size_t kk = std::min<size_t>(static_cast<size_t>(k), xs.size());
    std::vector<double> sorted = xs;
    std::partial_sort(sorted.begin(), sorted.begin() + kk, sorted.end(), std::greater<>());
    sorted.resize(kk);
    Value r(std::move(sorted));
    check_finite(r, "topk");
    return r;
  }
  if (name == "normalize") {
    double norm2 = 0.0;
    if (args[0].is_scalar()) {
      norm2 = args[0].scalar() * args[0].scalar();
    } else {
      for (double x : args[0].vec()) norm2 += x * x;
    }
    if (norm2 == 0.0) throw NumericError("normalize", "zero vector");
    double inv = 1.0 / std::sqrt(norm2);
    return elementwise1(args[0], [inv](double x) { return x * inv; }, "normalize");
  }
  if (name == "softmax") {
    const auto& xs = as_vec_view(args[0], scratch);
    double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) throw NumericError("softmax", "non-finite input");
    std::vector<double> out;
    out.reserve(xs.size());
    double denom = 0.0;
    for (double x : xs) denom += std::exp(x - m);
    for (double x : xs) out.push_back(std::exp(x - m) / denom);
    if (args[0].is_scalar()) return Value(out[0]);
    Value r(std::move(out));
    check_finite(r, "softmax");
    return r;
  }
  if (name == "entropy") {
    const auto& xs = as_vec_view(args[0], scratch);
    double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) throw NumericError("entropy", "non-finite input");
    double denom = 0.0;
    for (double x : xs) denom += std::exp(x - m);
    double h = 0.0;
    for (double x : xs) {
      double p = std::exp(x - m) / denom;
      if (p > 0.0) h -= p * std::log(p);  // p log p -> 0 as p -> 0
    }
    Value r(h);
    check_finite(r, "entropy");
    return r;
  }
  if (name == "stack") {
    std::vector<double> out;
    for (const auto& a : args) {
      if (a.is_scalar()) {
        out.push_back(a.scalar());
      } else {
        out.insert(out.end(), a.vec().begin(), a.vec().end());
      }
    }
    if (out.empty()) throw NumericError("stack", "empty vector");
    Value r(std::move(out));
    check_finite(r, "stack");
    return r;
  }
  throw NumericError(name, "unknown builtin");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Canonical signatures and source rendering
// ---------------------------------------------------------------------------

// Whitespace-normalized source: token texts joined with a single space.
inline std::string canonical_source(std::string_view source) {
  detail::Lexer lex(source);
  auto tokens = lex.run();
  std::string out;
  for (const auto& t : tokens) {
    if (t.kind == detail::Token::Kind::End) break;
    if (!out.empty()) out.push_back(' ');
    out += t.text;
  }
  return out;
}

// Collision-proof signature over the whitespace-normalized source.
inline std::string canonical_signature(std::string_view source) {
  parse_lambda(source);  // signatures are defined for parseable sources only
  return to_hex(Sha256::hash(canonical_source(source)));
}

namespace detail {

inline int precedence_of(const Expr& e) {
  switch (e.kind) {
    case Expr::Kind::Binary:
      if (e.op == '+' || e.op == '-') return 1;
      if (e.op == '*' || e.op == '/') return 2;
      return 4;  // power
    case Expr::Kind::Unary:
      return 3;
    default:
      return 5;
  }
}

inline void render(const Expr& e, std::string& out) {
  auto child = [&](const Expr& c, bool parens) {
    if (parens) out.push_back('(');
    render(c, out);
    if (parens) out.push_back(')');
  };
  switch (e.kind) {
    case Expr::Kind::Literal: {
      if (!e.literal_text.empty()) {
        out += e.literal_text;
      } else {
        std::ostringstream ss;
        ss << e.literal;
        out += ss.str();
      }
      return;
    }
    case Expr::Kind::Param:
      out += e.name;
      return;
    case Expr::Kind::Unary:
      out.push_back('-');
      child(*e.args[0], precedence_of(*e.args[0]) < precedence_of(e));
      return;
    case Expr::Kind::Binary: {
      int p = precedence_of(e);
      const Expr& lhs = *e.args[0];
      const Expr& rhs = *e.args[1];
      if (e.op == 'p') {
        child(lhs, precedence_of(lhs) <= p);  // power binds right
        out += " ** ";
        child(rhs, precedence_of(rhs) < p);
      } else {
        child(lhs, precedence_of(lhs) < p);
        out.push_back(' ');
        out.push_back(e.op);
        out.push_back(' ');
        // Right child needs parens at equal precedence: a - (b - c).
        child(rhs, precedence_of(rhs) <= p);
      }
      return;
    }
    case Expr::Kind::Call: {
      out += e.name;
      out.push_back('(');
      for (size_t i = 0; i < e.args.size(); ++i) {
        if (i > 0) out += ", ";
        render(*e.args[i], out);
      }
      out.push_back(')');
      return;
    }
  }
}

}  // namespace detail

inline std::string to_source(const Expr& body) {
  std::string out;
  detail::render(body, out);
  return out;
}

inline std::string to_lambda_source(const std::vector<std::string>& params, const Expr& body) {
  std::string out = "lambda";
  for (size_t i = 0; i < params.size(); ++i) {
    out += i == 0 ? " " : ", ";
    out += params[i];
  }
  out += ": ";
  out += to_source(body);
  return out;
}

}  // namespace evolattice
