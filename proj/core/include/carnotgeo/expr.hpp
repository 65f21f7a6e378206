#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "carnotgeo/error.hpp"

namespace carnot {

enum class Op : std::uint8_t {
  Const,
  Var,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Pow,
  Sin,
  Cos,
  Exp,
  Log,
  Sqrt,
  Abs,
  Sign,    // derivative of abs; raises NonDifferentiable at 0
  PosPow,  // max(u,0)^k, internal only (plateaus and bumps)
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op;
  double c = 0.0;  // constant value, or integer exponent k for PosPow
  int var = -1;
  NodePtr a, b;
};

class Expr {
 public:
  Expr() : Expr(constant(0.0)) {}
  explicit Expr(NodePtr p) : p_(std::move(p)) {}
  Expr(double c) : Expr(constant(c)) {}  // NOLINT implicit by design for arithmetic

  static Expr constant(double c);
  static Expr var(int i);

  const Node& node() const { return *p_; }
  const NodePtr& ptr() const { return p_; }
  bool is_const() const { return p_->op == Op::Const; }
  bool is_const(double v) const { return is_const() && p_->c == v; }

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);

 private:
  NodePtr p_;
};

Expr pow(const Expr& a, const Expr& b);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr exp(const Expr& a);
Expr log(const Expr& a);
Expr sqrt(const Expr& a);
Expr abs(const Expr& a);
Expr sign(const Expr& a);
Expr pospow(const Expr& a, int k);

// variables x1..xn; throws SyntaxError (with offset), UnknownIdentifier, ArityError
Expr parse(std::string_view src, int n);
std::string to_string(const Expr& e);

Expr diff(const Expr& e, int var);
Expr substitute(const Expr& e, const std::vector<Expr>& repl);
bool depends_on(const Expr& e, int var);
std::size_t node_count(const Expr& e);

struct JetValue {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

// Flat evaluation program for value and derivatives up to `order` (0, 1, 2).
// Subexpressions are shared across the value, gradient and Hessian entries;
// the Hessian is stored for i <= j and mirrored.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  CompiledExpr(const Expr& e, int n, int order = 2);

  int n() const { return n_; }
  int order() const { return order_; }
  double value(const double* x) const;
  double value(const Eigen::VectorXd& x) const { return value(x.data()); }
  JetValue jet(const Eigen::VectorXd& x) const;
  std::size_t size() const { return code_.size(); }

 private:
  struct Instr {
    Op op;
    int a, b;
    double c;
  };
  void run(const double* x, std::vector<double>& slot, std::size_t count) const;

  int n_ = 0;
  int order_ = 0;
  std::vector<Instr> code_;
  int value_slot_ = -1;
  std::vector<int> grad_slots_;
  std::vector<int> hess_slots_;  // row-major upper triangle
};

JetValue eval_jet(const Expr& e, const Eigen::VectorXd& x);
double eval(const Expr& e, const Eigen::VectorXd& x);

}  // namespace carnot
