#pragma once

#include <Eigen/Dense>

#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "common.hpp"
#include "data.hpp"
#include "regression.hpp"

namespace addiv {

namespace expr {

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  enum class Op { Const, Z, L, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Log, Abs };
  Op op = Op::Const;
  double value = 0.0;
  int index = 0;
  NodePtr a, b;

  double eval(const double* z, const double* l) const {
    switch (op) {
      case Op::Const: return value;
      case Op::Z: return z[index];
      case Op::L: return l[index];
      case Op::Neg: return -a->eval(z, l);
      case Op::Add: return a->eval(z, l) + b->eval(z, l);
      case Op::Sub: return a->eval(z, l) - b->eval(z, l);
      case Op::Mul: return a->eval(z, l) * b->eval(z, l);
      case Op::Div: return a->eval(z, l) / b->eval(z, l);
      case Op::Pow: return std::pow(a->eval(z, l), b->eval(z, l));
      case Op::Sin: return std::sin(a->eval(z, l));
      case Op::Cos: return std::cos(a->eval(z, l));
      case Op::Exp: return std::exp(a->eval(z, l));
      case Op::Log: return std::log(a->eval(z, l));
      case Op::Abs: return std::abs(a->eval(z, l));
    }
    return 0.0;
  }

  int max_index(Op which) const {
    int m = op == which ? index : -1;
    if (a) m = std::max(m, a->max_index(which));
    if (b) m = std::max(m, b->max_index(which));
    return m;
  }
};

// expr := term (('+'|'-') term)*; term := unary (('*'|'/') unary)*;
// unary := '-' unary | power; power := atom ('^' unary)?;
// atom := number | z<j> | l<j> | fn '(' expr [',' expr] ')' | '(' expr ')'.
class Parser {
public:
  explicit Parser(std::string src) : s_(std::move(src)) {}

  NodePtr parse() {
    NodePtr n = parse_expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw InvalidArgument("weight expression '" + s_ + "': " + msg + " at position " + std::to_string(pos_));
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  static NodePtr make(Node::Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }
  NodePtr parse_expr() {
    NodePtr n = parse_term();
    for (;;) {
      if (eat('+')) n = make(Node::Op::Add, n, parse_term());
      else if (eat('-')) n = make(Node::Op::Sub, n, parse_term());
      else return n;
    }
  }
  NodePtr parse_term() {
    NodePtr n = parse_unary();
    for (;;) {
      if (eat('*')) n = make(Node::Op::Mul, n, parse_unary());
      else if (eat('/')) n = make(Node::Op::Div, n, parse_unary());
      else return n;
    }
  }
  NodePtr parse_unary() {
    if (eat('-')) return make(Node::Op::Neg, parse_unary());
    if (eat('+')) return parse_unary();
    return parse_power();
  }
  NodePtr parse_power() {
    NodePtr n = parse_atom();
    if (eat('^')) n = make(Node::Op::Pow, n, parse_unary());
    return n;
  }
  NodePtr parse_atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    if (eat('(')) {
      NodePtr n = parse_expr();
      if (!eat(')')) fail("expected ')'");
      return n;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      const double v = std::stod(s_.substr(pos_), &used);
      pos_ += used;
      auto n = std::make_shared<Node>();
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string id = s_.substr(start, pos_ - start);
      if ((id[0] == 'z' || id[0] == 'l') && id.size() > 1 &&
          id.find_first_not_of("0123456789", 1) == std::string::npos) {
        auto n = std::make_shared<Node>();
        n->op = id[0] == 'z' ? Node::Op::Z : Node::Op::L;
        n->index = std::stoi(id.substr(1));
        return n;
      }
      if (id == "z") {
        auto n = std::make_shared<Node>();
        n->op = Node::Op::Z;
        return n;
      }
      static const std::vector<std::pair<std::string, Node::Op>> unary{
          {"sin", Node::Op::Sin}, {"cos", Node::Op::Cos}, {"exp", Node::Op::Exp},
          {"log", Node::Op::Log}, {"abs", Node::Op::Abs}};
      for (const auto& [name, op] : unary)
        if (id == name) {
          if (!eat('(')) fail("expected '(' after " + name);
          NodePtr arg = parse_expr();
          if (!eat(')')) fail("expected ')'");
          return make(op, arg);
        }
      if (id == "pow") {
        if (!eat('(')) fail("expected '(' after pow");
        NodePtr base = parse_expr();
        if (!eat(',')) fail("expected ',' in pow");
        NodePtr ex = parse_expr();
        if (!eat(')')) fail("expected ')'");
        return make(Node::Op::Pow, base, ex);
      }
      pos_ = start;
      fail("unknown name '" + id + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string s_;
  std::size_t pos_ = 0;
};

}  // namespace expr

// Declarative weighting function pi(Z, L).
struct WeightingFunctionSpec {
  enum class Kind { IdentityCoordinate, Expression, FittedPropensity };
  Kind kind = Kind::IdentityCoordinate;
  int coordinate = 0;
  std::string expression;
  // For FittedPropensity, -1 means "the treatment level of the estimand".
  int level = -1;

  static WeightingFunctionSpec identity(int j = 0) {
    WeightingFunctionSpec s;
    s.coordinate = j;
    return s;
  }
  static WeightingFunctionSpec expr(std::string e) {
    WeightingFunctionSpec s;
    s.kind = Kind::Expression;
    s.expression = std::move(e);
    s.compiled();
    return s;
  }
  static WeightingFunctionSpec propensity(int level = -1) {
    WeightingFunctionSpec s;
    s.kind = Kind::FittedPropensity;
    s.level = level;
    return s;
  }

  // "identity:j", "expr:<expression>", "propensity" or "propensity:a"; a bare expression is accepted.
  static WeightingFunctionSpec parse(const std::string& text) {
    if (text.rfind("identity", 0) == 0) {
      const auto colon = text.find(':');
      return identity(colon == std::string::npos ? 0 : std::stoi(text.substr(colon + 1)));
    }
    if (text.rfind("propensity", 0) == 0) {
      const auto colon = text.find(':');
      return propensity(colon == std::string::npos ? -1 : std::stoi(text.substr(colon + 1)));
    }
    if (text.rfind("expr:", 0) == 0) return expr(text.substr(5));
    return expr(text);
  }

  std::string describe() const {
    switch (kind) {
      case Kind::IdentityCoordinate: return "identity:" + std::to_string(coordinate);
      case Kind::Expression: return "expr:" + expression;
      case Kind::FittedPropensity: return level < 0 ? "propensity" : "propensity:" + std::to_string(level);
    }
    return {};
  }

  expr::NodePtr compiled() const { return expr::Parser(expression).parse(); }

  // Fixed (non-fitted) evaluation on instrument rows z and covariate rows l.
  Eigen::VectorXd evaluate_fixed(const Eigen::MatrixXd& z, const Eigen::MatrixXd& l) const {
    const Index n = z.rows();
    Eigen::VectorXd out(n);
    if (kind == Kind::IdentityCoordinate) {
      if (coordinate < 0 || coordinate >= z.cols())
        throw InvalidArgument("identity weighting coordinate " + std::to_string(coordinate) +
                              " outside instrument dimension " + std::to_string(z.cols()));
      return z.col(coordinate);
    }
    if (kind != Kind::Expression) throw InvalidArgument("fitted weighting function needs training rows");
    const auto node = compiled();
    if (node->max_index(expr::Node::Op::Z) >= z.cols())
      throw InvalidArgument("weight expression references an instrument column that does not exist");
    if (node->max_index(expr::Node::Op::L) >= l.cols())
      throw InvalidArgument("weight expression references a covariate column that does not exist");
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> zr = z, lr = l;
    for (Index i = 0; i < n; ++i) out(i) = node->eval(zr.row(i).data(), lr.row(i).data());
    if (!out.allFinite()) throw InvalidArgument("weight expression is not finite on the dataset");
    return out;
  }
};

// pi on every row of the dataset; a fitted propensity only reads the training rows.
inline Eigen::VectorXd evaluate_weight(const WeightingFunctionSpec& pi, const PointDataset& d, int level,
                                       const Rows& train, const RegressorSpec& spec) {
  if (pi.kind != WeightingFunctionSpec::Kind::FittedPropensity) return pi.evaluate_fixed(d.z(), d.l());
  const int a = pi.level >= 0 ? pi.level : level;
  Eigen::MatrixXd x(d.n(), d.z_dim() + d.l_dim());
  x << d.z(), d.l();
  const Eigen::VectorXd target = d.indicator(a);
  const auto model = fit_conditional_mean(x(train, Eigen::all), target(train),
                                          spec.with_link(Link::ClippedProbability).with_tensor(true));
  return model.predict(x);
}

}  // namespace addiv
