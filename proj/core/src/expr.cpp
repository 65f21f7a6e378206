#include "carnotgeo/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <unordered_map>

namespace carnot {

namespace {

NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr, double c = 0.0, int var = -1) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  n->c = c;
  n->var = var;
  return n;
}

bool is_int(double v) { return std::floor(v) == v && std::abs(v) < 2147483647.0; }

}  // namespace

Expr Expr::constant(double c) { return Expr(make(Op::Const, nullptr, nullptr, c)); }
Expr Expr::var(int i) { return Expr(make(Op::Var, nullptr, nullptr, 0.0, i)); }

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return Expr::constant(a.node().c + b.node().c);
  if (a.is_const(0.0)) return b;
  if (b.is_const(0.0)) return a;
  return Expr(make(Op::Add, a.ptr(), b.ptr()));
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return Expr::constant(a.node().c - b.node().c);
  if (b.is_const(0.0)) return a;
  if (a.is_const(0.0)) return -b;
  return Expr(make(Op::Sub, a.ptr(), b.ptr()));
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const()) return Expr::constant(a.node().c * b.node().c);
  if (a.is_const(0.0) || b.is_const(0.0)) return Expr::constant(0.0);
  if (a.is_const(1.0)) return b;
  if (b.is_const(1.0)) return a;
  if (a.is_const(-1.0)) return -b;
  if (b.is_const(-1.0)) return -a;
  return Expr(make(Op::Mul, a.ptr(), b.ptr()));
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_const() && b.is_const() && b.node().c != 0.0) return Expr::constant(a.node().c / b.node().c);
  if (a.is_const(0.0)) return Expr::constant(0.0);
  if (b.is_const(1.0)) return a;
  return Expr(make(Op::Div, a.ptr(), b.ptr()));
}

Expr operator-(const Expr& a) {
  if (a.is_const()) return Expr::constant(-a.node().c);
  if (a.node().op == Op::Neg) return Expr(a.node().a);
  return Expr(make(Op::Neg, a.ptr()));
}

Expr pow(const Expr& a, const Expr& b) {
  if (b.is_const(1.0)) return a;
  if (b.is_const(0.0)) return Expr::constant(1.0);
  if (a.is_const() && b.is_const()) {
    double x = a.node().c, y = b.node().c;
    if ((x > 0.0) || (x == 0.0 && y > 0.0) || (x < 0.0 && is_int(y))) return Expr::constant(std::pow(x, y));
  }
  return Expr(make(Op::Pow, a.ptr(), b.ptr()));
}

#define CARNOT_UNARY(name, OPC)                                     \
  Expr name(const Expr& a) { return Expr(make(Op::OPC, a.ptr())); }
CARNOT_UNARY(sin, Sin)
CARNOT_UNARY(cos, Cos)
CARNOT_UNARY(exp, Exp)
CARNOT_UNARY(log, Log)
CARNOT_UNARY(sqrt, Sqrt)
CARNOT_UNARY(abs, Abs)
CARNOT_UNARY(sign, Sign)
#undef CARNOT_UNARY

Expr pospow(const Expr& a, int k) {
  if (k < 0) throw Error(ErrorCode::InvalidInput, "pospow exponent must be >= 0");
  return Expr(make(Op::PosPow, a.ptr(), nullptr, static_cast<double>(k)));
}

// ---------------------------------------------------------------- parser

namespace {

class Parser {
 public:
  Parser(std::string_view s, int n) : s_(s), n_(n) {}

  Expr parse_all() {
    skip();
    if (pos_ >= s_.size()) fail("empty expression");
    Expr e = expr();
    skip();
    if (pos_ < s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) {
    throw Error(ErrorCode::SyntaxError, msg + " at offset " + std::to_string(pos_), static_cast<long>(pos_));
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

  Expr expr() {
    Expr e = term();
    for (;;) {
      if (eat('+'))
        e = e + term();
      else if (eat('-'))
        e = e - term();
      else
        return e;
    }
  }
  Expr term() {
    Expr e = unary();
    for (;;) {
      if (eat('*'))
        e = e * unary();
      else if (eat('/'))
        e = e / unary();
      else
        return e;
    }
  }
  Expr unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }
  Expr power() {
    Expr base = primary();
    if (eat('^')) return pow(base, unary());
    return base;
  }
  Expr primary() {
    skip();
    if (pos_ >= s_.size()) fail("expected an operand");
    char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    if (eat('(')) {
      Expr e = expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    fail("unexpected character '" + std::string(1, c) + "'");
  }
  Expr number() {
    std::size_t start = pos_;
    auto digits = [&] {
      std::size_t d = 0;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, ++d;
      return d;
    };
    std::size_t nd = digits();
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      nd += digits();
    }
    if (nd == 0) {
      pos_ = start;
      fail("malformed number");
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (digits() == 0) pos_ = save;
    }
    std::string lit(s_.substr(start, pos_ - start));
    return Expr::constant(std::strtod(lit.c_str(), nullptr));
  }
  Expr identifier() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    std::string id(s_.substr(start, pos_ - start));
    static const char* funcs[] = {"sin", "cos", "exp", "log", "sqrt", "abs"};
    for (const char* f : funcs) {
      if (id != f) continue;
      if (!eat('(')) fail("expected '(' after " + id);
      std::vector<Expr> args;
      skip();
      if (!(pos_ < s_.size() && s_[pos_] == ')')) {
        args.push_back(expr());
        while (eat(',')) args.push_back(expr());
      }
      if (!eat(')')) fail("expected ')'");
      if (args.size() != 1)
        throw Error(ErrorCode::ArityError, id + " takes 1 argument, got " + std::to_string(args.size()),
                    static_cast<long>(start));
      const Expr& a = args[0];
      if (id == "sin") return sin(a);
      if (id == "cos") return cos(a);
      if (id == "exp") return exp(a);
      if (id == "log") return log(a);
      if (id == "sqrt") return sqrt(a);
      return abs(a);
    }
    if (id == "pi") return Expr::constant(M_PI);
    if (id.size() >= 2 && id[0] == 'x' && id[1] != '0' &&
        id.find_first_not_of("0123456789", 1) == std::string::npos && id.size() < 10) {
      int k = std::stoi(id.substr(1));
      if (k >= 1 && k <= n_) return Expr::var(k - 1);
    }
    throw Error(ErrorCode::UnknownIdentifier, "unknown identifier '" + id + "' at offset " + std::to_string(start),
                static_cast<long>(start));
  }

  std::string_view s_;
  int n_;
  std::size_t pos_ = 0;
};

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // prefer the shortest representation that round-trips
  for (int p = 1; p <= 17; ++p) {
    char t[40];
    std::snprintf(t, sizeof t, "%.*g", p, v);
    if (std::strtod(t, nullptr) == v) return t;
  }
  return buf;
}

int level(const Node& n) {
  switch (n.op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    case Op::Const: return n.c < 0.0 || std::signbit(n.c) ? 3 : 5;
    default: return 5;
  }
}

std::string print(const Node& n, int min_level);

std::string wrap(const Node& n, int min_level) {
  std::string s = print(n, min_level);
  return level(n) < min_level ? "(" + s + ")" : s;
}

std::string print(const Node& n, int) {
  switch (n.op) {
    case Op::Const: return fmt_num(n.c);
    case Op::Var: return "x" + std::to_string(n.var + 1);
    case Op::Add: return wrap(*n.a, 1) + " + " + wrap(*n.b, 2);
    case Op::Sub: return wrap(*n.a, 1) + " - " + wrap(*n.b, 2);
    case Op::Mul: return wrap(*n.a, 2) + "*" + wrap(*n.b, 3);
    case Op::Div: return wrap(*n.a, 2) + "/" + wrap(*n.b, 3);
    case Op::Neg: return "-" + wrap(*n.a, 3);
    case Op::Pow: return wrap(*n.a, 5) + "^" + wrap(*n.b, 3);
    case Op::Sin: return "sin(" + print(*n.a, 0) + ")";
    case Op::Cos: return "cos(" + print(*n.a, 0) + ")";
    case Op::Exp: return "exp(" + print(*n.a, 0) + ")";
    case Op::Log: return "log(" + print(*n.a, 0) + ")";
    case Op::Sqrt: return "sqrt(" + print(*n.a, 0) + ")";
    case Op::Abs: return "abs(" + print(*n.a, 0) + ")";
    case Op::Sign: return "sign(" + print(*n.a, 0) + ")";
    case Op::PosPow: return "pospow(" + print(*n.a, 0) + ", " + fmt_num(n.c) + ")";
  }
  return "?";
}

}  // namespace

Expr parse(std::string_view src, int n) { return Parser(src, n).parse_all(); }

std::string to_string(const Expr& e) { return print(e.node(), 0); }

// ---------------------------------------------------------------- symbolic

Expr diff(const Expr& e, int var) {
  std::unordered_map<const Node*, Expr> memo;
  std::function<Expr(const Expr&)> d = [&](const Expr& x) -> Expr {
    auto it = memo.find(x.ptr().get());
    if (it != memo.end()) return it->second;
    const Node& n = x.node();
    Expr A = n.a ? Expr(n.a) : Expr(), B = n.b ? Expr(n.b) : Expr();
    Expr r;
    switch (n.op) {
      case Op::Const: r = 0.0; break;
      case Op::Var: r = n.var == var ? 1.0 : 0.0; break;
      case Op::Add: r = d(A) + d(B); break;
      case Op::Sub: r = d(A) - d(B); break;
      case Op::Mul: r = d(A) * B + A * d(B); break;
      case Op::Div: r = (d(A) - x * d(B)) / B; break;
      case Op::Neg: r = -d(A); break;
      case Op::Pow:
        if (B.is_const()) {
          double c = B.node().c;
          r = Expr(c) * pow(A, Expr(c - 1.0)) * d(A);
        } else {
          r = x * (d(B) * log(A) + B * d(A) / A);
        }
        break;
      case Op::Sin: r = cos(A) * d(A); break;
      case Op::Cos: r = -(sin(A) * d(A)); break;
      case Op::Exp: r = x * d(A); break;
      case Op::Log: r = d(A) / A; break;
      case Op::Sqrt: r = d(A) / (Expr(2.0) * x); break;
      case Op::Abs: r = sign(A) * d(A); break;
      case Op::Sign: r = 0.0; break;
      case Op::PosPow: {
        int k = static_cast<int>(n.c);
        r = k == 0 ? Expr(0.0) : Expr(static_cast<double>(k)) * pospow(A, k - 1) * d(A);
        if (k == 1) r = pospow(A, 0) * d(A);
        break;
      }
    }
    memo.emplace(x.ptr().get(), r);
    return r;
  };
  return d(e);
}

Expr substitute(const Expr& e, const std::vector<Expr>& repl) {
  std::unordered_map<const Node*, Expr> memo;
  std::function<Expr(const Expr&)> s = [&](const Expr& x) -> Expr {
    auto it = memo.find(x.ptr().get());
    if (it != memo.end()) return it->second;
    const Node& n = x.node();
    Expr r;
    switch (n.op) {
      case Op::Const: r = x; break;
      case Op::Var:
        if (n.var >= static_cast<int>(repl.size()))
          throw Error(ErrorCode::IndexOutOfRange, "substitution misses variable x" + std::to_string(n.var + 1));
        r = repl[n.var];
        break;
      case Op::Add: r = s(Expr(n.a)) + s(Expr(n.b)); break;
      case Op::Sub: r = s(Expr(n.a)) - s(Expr(n.b)); break;
      case Op::Mul: r = s(Expr(n.a)) * s(Expr(n.b)); break;
      case Op::Div: r = s(Expr(n.a)) / s(Expr(n.b)); break;
      case Op::Neg: r = -s(Expr(n.a)); break;
      case Op::Pow: r = pow(s(Expr(n.a)), s(Expr(n.b))); break;
      case Op::Sin: r = sin(s(Expr(n.a))); break;
      case Op::Cos: r = cos(s(Expr(n.a))); break;
      case Op::Exp: r = exp(s(Expr(n.a))); break;
      case Op::Log: r = log(s(Expr(n.a))); break;
      case Op::Sqrt: r = sqrt(s(Expr(n.a))); break;
      case Op::Abs: r = abs(s(Expr(n.a))); break;
      case Op::Sign: r = sign(s(Expr(n.a))); break;
      case Op::PosPow: r = pospow(s(Expr(n.a)), static_cast<int>(n.c)); break;
    }
    memo.emplace(x.ptr().get(), r);
    return r;
  };
  return s(e);
}

bool depends_on(const Expr& e, int var) {
  std::unordered_map<const Node*, bool> memo;
  std::function<bool(const Node*)> f = [&](const Node* n) -> bool {
    if (!n) return false;
    auto it = memo.find(n);
    if (it != memo.end()) return it->second;
    bool r = (n->op == Op::Var && n->var == var) || f(n->a.get()) || f(n->b.get());
    memo.emplace(n, r);
    return r;
  };
  return f(e.ptr().get());
}

std::size_t node_count(const Expr& e) {
  std::unordered_map<const Node*, bool> seen;
  std::function<void(const Node*)> f = [&](const Node* n) {
    if (!n || seen.count(n)) return;
    seen[n] = true;
    f(n->a.get());
    f(n->b.get());
  };
  f(e.ptr().get());
  return seen.size();
}

// ---------------------------------------------------------------- tape

namespace {

struct Key {
  Op op;
  int a, b;
  std::uint64_t cbits;
  bool operator==(const Key& o) const { return op == o.op && a == o.a && b == o.b && cbits == o.cbits; }
};
struct KeyHash {
  std::size_t operator()(const Key& k) const {
    std::size_t h = static_cast<std::size_t>(k.op);
    h = h * 1000003u ^ static_cast<std::size_t>(k.a + 1);
    h = h * 1000003u ^ static_cast<std::size_t>(k.b + 1);
    h = h * 1000003u ^ static_cast<std::size_t>(k.cbits ^ (k.cbits >> 29));
    return h;
  }
};

}  // namespace

CompiledExpr::CompiledExpr(const Expr& e, int n, int order) : n_(n), order_(order) {
  if (order < 0 || order > 2) throw Error(ErrorCode::InvalidInput, "jet order must be 0, 1 or 2");
  std::unordered_map<Key, int, KeyHash> consed;
  std::unordered_map<const Node*, int> by_ptr;
  std::vector<Expr> keep;  // keeps derivative trees alive while compiling

  std::function<int(const Expr&)> emit = [&](const Expr& x) -> int {
    auto it = by_ptr.find(x.ptr().get());
    if (it != by_ptr.end()) return it->second;
    const Node& nd = x.node();
    if (nd.op == Op::Var && (nd.var < 0 || nd.var >= n_))
      throw Error(ErrorCode::IndexOutOfRange, "variable x" + std::to_string(nd.var + 1) + " beyond dimension");
    int a = nd.a ? emit(Expr(nd.a)) : -1;
    int b = nd.b ? emit(Expr(nd.b)) : -1;
    double c = nd.op == Op::Var ? static_cast<double>(nd.var) : nd.c;
    std::uint64_t bits;
    std::memcpy(&bits, &c, sizeof bits);
    Key k{nd.op, a, b, bits};
    auto ct = consed.find(k);
    int slot;
    if (ct != consed.end()) {
      slot = ct->second;
    } else {
      slot = static_cast<int>(code_.size());
      code_.push_back({nd.op, a, b, c});
      consed.emplace(k, slot);
    }
    by_ptr.emplace(x.ptr().get(), slot);
    keep.push_back(x);
    return slot;
  };

  value_slot_ = emit(e);
  if (order >= 1) {
    std::vector<Expr> g(n);
    for (int i = 0; i < n; ++i) {
      g[i] = diff(e, i);
      grad_slots_.push_back(emit(g[i]));
    }
    if (order >= 2) {
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) hess_slots_.push_back(emit(diff(g[i], j)));
    }
  }
}

void CompiledExpr::run(const double* x, std::vector<double>& s, std::size_t count) const {
  s.resize(code_.size());
  for (std::size_t k = 0; k < count; ++k) {
    const Instr& I = code_[k];
    double a = I.a >= 0 ? s[I.a] : 0.0, b = I.b >= 0 ? s[I.b] : 0.0, v = 0.0;
    switch (I.op) {
      case Op::Const: v = I.c; break;
      case Op::Var: v = x[static_cast<int>(I.c)]; break;
      case Op::Add: v = a + b; break;
      case Op::Sub: v = a - b; break;
      case Op::Mul: v = a * b; break;
      case Op::Div:
        if (b == 0.0) throw Error(ErrorCode::DomainError, "division by zero");
        v = a / b;
        break;
      case Op::Neg: v = -a; break;
      case Op::Pow:
        if (a < 0.0 && !is_int(b)) throw Error(ErrorCode::DomainError, "negative base with non-integer exponent");
        if (a == 0.0 && b < 0.0) throw Error(ErrorCode::DomainError, "zero base with negative exponent");
        v = std::pow(a, b);
        break;
      case Op::Sin: v = std::sin(a); break;
      case Op::Cos: v = std::cos(a); break;
      case Op::Exp: v = std::exp(a); break;
      case Op::Log:
        if (a <= 0.0) throw Error(ErrorCode::DomainError, "log of non-positive value");
        v = std::log(a);
        break;
      case Op::Sqrt:
        if (a < 0.0) throw Error(ErrorCode::DomainError, "sqrt of negative value");
        v = std::sqrt(a);
        break;
      case Op::Abs: v = std::abs(a); break;
      case Op::Sign:
        if (a == 0.0) throw Error(ErrorCode::NonDifferentiable, "abs differentiated at 0");
        v = a > 0.0 ? 1.0 : -1.0;
        break;
      case Op::PosPow: {
        int kk = static_cast<int>(I.c);
        if (a <= 0.0)
          v = 0.0;
        else if (kk == 0)
          v = 1.0;
        else {
          v = a;
          for (int q = 1; q < kk; ++q) v *= a;
        }
        break;
      }
    }
    s[k] = v;
  }
}

double CompiledExpr::value(const double* x) const {
  thread_local std::vector<double> s;
  // the value and its dependencies are emitted first, so derivative-only
  // instructions (and their NonDifferentiable checks) are skipped here
  run(x, s, static_cast<std::size_t>(value_slot_) + 1);
  return s[value_slot_];
}

JetValue CompiledExpr::jet(const Eigen::VectorXd& x) const {
  thread_local std::vector<double> s;
  run(x.data(), s, code_.size());
  JetValue j;
  j.value = s[value_slot_];
  j.grad = Eigen::VectorXd::Zero(n_);
  j.hess = Eigen::MatrixXd::Zero(n_, n_);
  if (order_ >= 1)
    for (int i = 0; i < n_; ++i) j.grad[i] = s[grad_slots_[i]];
  if (order_ >= 2) {
    std::size_t k = 0;
    for (int i = 0; i < n_; ++i)
      for (int jj = i; jj < n_; ++jj, ++k) {
        j.hess(i, jj) = s[hess_slots_[k]];
        j.hess(jj, i) = j.hess(i, jj);
      }
  }
  return j;
}

JetValue eval_jet(const Expr& e, const Eigen::VectorXd& x) {
  return CompiledExpr(e, static_cast<int>(x.size()), 2).jet(x);
}

double eval(const Expr& e, const Eigen::VectorXd& x) {
  return CompiledExpr(e, static_cast<int>(x.size()), 0).value(x);
}

}  // namespace carnot
