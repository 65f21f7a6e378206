#include "carnotgeo/surface.hpp"

#include <cmath>
#include <limits>

#include "carnotgeo/parallel.hpp"

namespace carnot {

// ---------------------------------------------------------------- symbolic group operations

ExprVec coordinate_exprs(int n) {
  ExprVec v;
  for (int i = 0; i < n; ++i) v.push_back(Expr::var(i));
  return v;
}

ExprVec constant_exprs(const Vec& a) {
  ExprVec v;
  for (int i = 0; i < a.size(); ++i) v.emplace_back(a[i]);
  return v;
}

ExprVec sym_bracket(const CarnotGroup& g, const ExprVec& x, const ExprVec& y) {
  const int n = g.n();
  ExprVec z(n, Expr(0.0));
  for (int r = 0; r < n; ++r)
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double c = g.C(r, i, j);
        if (c == 0.0) continue;
        Expr term = x[i] * y[j] - x[j] * y[i];
        z[r] = z[r] + Expr(c) * term;
      }
  return z;
}

ExprVec sym_product(const CarnotGroup& g, const ExprVec& x, const ExprVec& y) {
  if (g.step() > 3) throw Error(ErrorCode::UnsupportedStep, "group law needs step <= 3");
  const int n = g.n();
  ExprVec xy = sym_bracket(g, x, y);
  ExprVec z(n);
  for (int r = 0; r < n; ++r) z[r] = x[r] + y[r] + Expr(0.5) * xy[r];
  if (g.step() == 3) {
    ExprVec a = sym_bracket(g, x, xy), b = sym_bracket(g, y, xy);
    for (int r = 0; r < n; ++r) z[r] = z[r] + (a[r] - b[r]) / Expr(12.0);
  }
  return z;
}

ExprVec sym_dilate(const CarnotGroup& g, double t, const ExprVec& x) {
  ExprVec z(x.size());
  for (int l = 0; l < g.n(); ++l) z[l] = Expr(std::pow(t, g.ord(l))) * x[l];
  return z;
}

std::vector<ExprVec> sym_frame(const CarnotGroup& g) {
  if (g.step() > 3) throw Error(ErrorCode::UnsupportedStep, "frame needs step <= 3");
  const int n = g.n();
  ExprVec x = coordinate_exprs(n);
  std::vector<ExprVec> cols;
  for (int i = 0; i < n; ++i) {
    ExprVec e(n, Expr(0.0));
    e[i] = Expr(1.0);
    ExprVec b1 = sym_bracket(g, x, e), b2 = sym_bracket(g, x, b1);
    for (int r = 0; r < n; ++r) e[r] = e[r] + Expr(0.5) * b1[r] + b2[r] / Expr(12.0);
    cols.push_back(e);
  }
  return cols;
}

ExprVec sym_frame_gradient(const CarnotGroup& g, const Expr& f) {
  const int n = g.n();
  ExprVec df;
  for (int r = 0; r < n; ++r) df.push_back(diff(f, r));
  ExprVec out;
  for (const ExprVec& col : sym_frame(g)) {
    Expr s(0.0);
    for (int r = 0; r < n; ++r) s = s + col[r] * df[r];
    out.push_back(s);
  }
  return out;
}

Expr norm_power_expr(const HomNormSpec& spec, const CarnotGroup& g, const ExprVec& x) {
  const auto& sig = g.signature();
  auto sq = [&](int b, int e) {
    Expr s(0.0);
    for (int l = b; l < e; ++l) s = s + x[l] * x[l];
    return s;
  };
  if (spec.kind == HomNormSpec::Kind::koranyi_step2) {
    if (g.step() != 2) throw Error(ErrorCode::UnsupportedNormForGroup, "koranyi_step2 needs a step-2 group");
    double c = spec.coefs.empty() ? 16.0 : spec.coefs[0];
    Expr h = sq(0, g.h());
    return h * h + Expr(c) * sq(g.h(), g.n());
  }
  int K = norm_power(spec, g) / 2;
  Expr acc(0.0);
  for (int s = 1; s <= g.step(); ++s) {
    double w = static_cast<std::size_t>(s - 1) < spec.coefs.size() ? spec.coefs[s - 1] : 1.0;
    acc = acc + Expr(w) * pow(sq(sig.stratum_begin(s), sig.stratum_end(s)), Expr(static_cast<double>(K / s)));
  }
  return acc;
}

// ---------------------------------------------------------------- transforms

Transform Transform::dilation(double t) {
  if (t <= 0.0) throw Error(ErrorCode::NegativeDilation, "surface transforms need t > 0");
  Transform T;
  T.steps_.push_back({Step::Kind::dilate, t, Vec()});
  return T;
}

Transform Transform::translation(const Vec& a) {
  Transform T;
  T.steps_.push_back({Step::Kind::translate, 1.0, a});
  return T;
}

Transform Transform::then(const Transform& next) const {
  Transform T = *this;
  T.steps_.insert(T.steps_.end(), next.steps_.begin(), next.steps_.end());
  return T;
}

double Transform::scale() const {
  double s = 1.0;
  for (const auto& st : steps_)
    if (st.kind == Step::Kind::dilate) s *= st.t;
  return s;
}

Vec Transform::apply(const CarnotGroup& g, const Vec& x) const {
  Vec y = x;
  for (const auto& st : steps_) y = st.kind == Step::Kind::dilate ? g.dilate(st.t, y) : g.product(st.a, y);
  return y;
}

ExprVec Transform::forward_exprs(const CarnotGroup& g) const {
  ExprVec y = coordinate_exprs(g.n());
  for (const auto& st : steps_)
    y = st.kind == Step::Kind::dilate ? sym_dilate(g, st.t, y) : sym_product(g, constant_exprs(st.a), y);
  return y;
}

ExprVec Transform::inverse_exprs(const CarnotGroup& g) const {
  ExprVec y = coordinate_exprs(g.n());
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it)
    y = it->kind == Step::Kind::dilate ? sym_dilate(g, 1.0 / it->t, y)
                                       : sym_product(g, constant_exprs(g.inverse(it->a)), y);
  return y;
}

// ---------------------------------------------------------------- domains

double ParamDomain::volume() const {
  double v = 1.0;
  for (const auto& a : axes) v *= a.hi - a.lo;
  return v;
}

std::size_t ParamDomain::cell_count() const {
  std::size_t c = 1;
  for (const auto& a : axes) c *= static_cast<std::size_t>(a.cells);
  return c;
}

std::vector<int> ParamDomain::vertex_counts() const {
  std::vector<int> v;
  for (const auto& a : axes) v.push_back(a.cells + 1);
  return v;
}

// ---------------------------------------------------------------- charts

class Chart {
 public:
  virtual ~Chart() = default;
  virtual void map(const Vec& q, Vec& u, Mat& T) const = 0;
  virtual Expr defining() const = 0;
  virtual bool closed() const { return false; }
  ParamDomain dom;
};

namespace {

// maps s in R^d (the coordinates other than one axis) to the surface
class RawChart {
 public:
  virtual ~RawChart() = default;
  virtual void map(const Vec& s, Vec& u, Mat& T) const = 0;
};

// root of f in [a, b] given a sign change; Newton steps that stay inside the
// shrinking bracket, bisection otherwise
template <class F>
double bracketed_root(double a, double b, double fa, F&& f) {
  double x = 0.5 * (a + b);
  bool polish = false;
  for (int it = 0; it < 200; ++it) {
    double df = 0.0, fx = f(x, df);
    if (fx == 0.0) return x;
    if ((fx < 0.0) == (fa < 0.0)) {
      a = x;
      fa = fx;
    } else {
      b = x;
    }
    double nx = df != 0.0 ? x - fx / df : a;
    bool inside = (nx - a) * (nx - b) <= 0.0;
    if (inside && polish) return nx;
    // once the Newton step is tiny, one more step reaches roundoff
    if (inside && std::abs(nx - x) < 1e-13 * (1.0 + std::abs(x))) polish = true;
    if (std::abs(b - a) <= 4e-16 * std::max(std::abs(a), std::abs(b))) return 0.5 * (a + b);
    x = inside ? nx : 0.5 * (a + b);
  }
  return x;
}

std::vector<int> other_axes(int n, int skip) {
  std::vector<int> k;
  for (int i = 0; i < n; ++i)
    if (i != skip) k.push_back(i);
  return k;
}

class GraphRaw : public RawChart {
 public:
  GraphRaw(int n, int alpha, const Expr& psi) : n_(n), alpha_(alpha), axes_(other_axes(n, alpha)), psi_(psi, n, 1) {}
  void map(const Vec& s, Vec& u, Mat& T) const override {
    u = Vec::Zero(n_);
    for (std::size_t a = 0; a < axes_.size(); ++a) u[axes_[a]] = s[a];
    JetValue j = psi_.jet(u);
    u[alpha_] = j.value;
    T = Mat::Zero(n_, n_ - 1);
    for (std::size_t a = 0; a < axes_.size(); ++a) {
      T(axes_[a], a) = 1.0;
      T(alpha_, a) = j.grad[axes_[a]];
    }
  }

 private:
  int n_, alpha_;
  std::vector<int> axes_;
  CompiledExpr psi_;
};

class LevelsetRaw : public RawChart {
 public:
  LevelsetRaw(int n, int axis, const Expr& phi, double lo, double hi)
      : n_(n), axis_(axis), axes_(other_axes(n, axis)), phi_(phi, n, 1), lo_(lo), hi_(hi) {}
  void map(const Vec& s, Vec& u, Mat& T) const override {
    u = Vec::Zero(n_);
    for (std::size_t a = 0; a < axes_.size(); ++a) u[axes_[a]] = s[a];
    auto f = [&](double v) {
      u[axis_] = v;
      return phi_.value(u);
    };
    const int scan = 32;
    double a = lo_, fa = f(a), b = a, fb = fa;
    bool found = fa == 0.0;
    for (int k = 1; k <= scan && !found; ++k) {
      b = lo_ + (hi_ - lo_) * k / scan;
      fb = f(b);
      if (fb == 0.0 || (fa < 0.0) != (fb < 0.0)) {
        found = true;
        break;
      }
      a = b;
      fa = fb;
    }
    if (!found) throw Error(ErrorCode::ChartExtractionFailed, "levelset has no crossing along the chart axis");
    u[axis_] = bracketed_root(a, b, fa, [&](double v, double& dv) {
      u[axis_] = v;
      JetValue j = phi_.jet(u);
      dv = j.grad[axis_];
      return j.value;
    });
    JetValue j = phi_.jet(u);
    if (std::abs(j.grad[axis_]) < 1e-14)
      throw Error(ErrorCode::ChartExtractionFailed, "levelset tangent to the chart axis");
    T = Mat::Zero(n_, n_ - 1);
    for (std::size_t k = 0; k < axes_.size(); ++k) {
      T(axes_[k], k) = 1.0;
      T(axis_, k) = -j.grad[axes_[k]] / j.grad[axis_];
    }
  }

 private:
  int n_, axis_;
  std::vector<int> axes_;
  CompiledExpr phi_;
  double lo_, hi_;
};

class BoxChart : public Chart {
 public:
  BoxChart(std::unique_ptr<RawChart> raw, Expr F) : raw_(std::move(raw)), F_(std::move(F)) {}
  void map(const Vec& q, Vec& u, Mat& T) const override { raw_->map(q, u, T); }
  Expr defining() const override { return F_; }

 private:
  std::unique_ptr<RawChart> raw_;
  Expr F_;
};

// (r, theta) over a planar raw chart; the ball variant rescales r by the
// boundary radius m(theta) of a region {B <= 0} star-shaped about the center
class PolarChart : public Chart {
 public:
  PolarChart(std::unique_ptr<RawChart> raw, Expr F, std::array<double, 2> c, std::optional<Expr> region, int n)
      : raw_(std::move(raw)), F_(std::move(F)), c_(c) {
    if (region) B_ = CompiledExpr(*region, n, 1);
  }
  void map(const Vec& q, Vec& u, Mat& T) const override {
    double r = q[0], th = q[1];
    Vec d(2), dd(2);
    d << std::cos(th), std::sin(th);
    dd << -std::sin(th), std::cos(th);
    Mat ds(2, 2);
    Vec s(2);
    if (B_.n() == 0) {
      s << c_[0] + r * d[0], c_[1] + r * d[1];
      ds.col(0) = d;
      ds.col(1) = r * dd;
    } else {
      double m, mp;
      boundary_radius(d, dd, m, mp);
      s << c_[0] + r * m * d[0], c_[1] + r * m * d[1];
      ds.col(0) = m * d;
      ds.col(1) = r * (mp * d + m * dd);
    }
    Mat Traw;
    raw_->map(s, u, Traw);
    T = Traw * ds;
  }
  Expr defining() const override { return F_; }

 private:
  void boundary_radius(const Vec& d, const Vec& dd, double& m, double& mp) const {
    Vec u;
    Mat Traw;
    auto f = [&](double mm) {
      Vec s(2);
      s << c_[0] + mm * d[0], c_[1] + mm * d[1];
      raw_->map(s, u, Traw);
      return B_.value(u);
    };
    double a = 0.0, b = 1e-3;
    if (f(a) >= 0.0) throw Error(ErrorCode::ChartExtractionFailed, "ball center is not inside the region");
    int guard = 0;
    while (f(b) < 0.0) {
      a = b;
      b *= 2.0;
      if (++guard > 80) throw Error(ErrorCode::ChartExtractionFailed, "ball region is unbounded along a ray");
    }
    m = bracketed_root(a, b, f(a), [&](double mm, double& dm) {
      Vec s(2);
      s << c_[0] + mm * d[0], c_[1] + mm * d[1];
      raw_->map(s, u, Traw);
      JetValue j = B_.jet(u);
      dm = (Traw.transpose() * j.grad).dot(d);
      return j.value;
    });
    Vec s(2);
    s << c_[0] + m * d[0], c_[1] + m * d[1];
    raw_->map(s, u, Traw);
    JetValue j = B_.jet(u);
    Vec gs = Traw.transpose() * j.grad;
    double dm = gs.dot(d);
    if (std::abs(dm) < 1e-300) throw Error(ErrorCode::ChartExtractionFailed, "ball boundary tangent to a ray");
    mp = -m * gs.dot(dd) / dm;
  }

  std::unique_ptr<RawChart> raw_;
  Expr F_;
  std::array<double, 2> c_;
  CompiledExpr B_;
};

class RadialChart : public Chart {
 public:
  RadialChart(const Expr& phi, int n, Vec c, std::vector<std::array<double, 2>> box)
      : n_(n), phi_(phi, n, 1), F_(phi), c_(std::move(c)), box_(std::move(box)) {
    int d = n - 1;
    factors_.assign(n, {});
    // omega_{n-1-m} = prod_{l<m} sin(a_l) cos(a_m); the first two coordinates
    // carry the azimuth
    for (int m = 0; m <= d - 2; ++m) {
      auto& f = factors_[n - 1 - m];
      for (int l = 0; l < m; ++l) f.push_back({l, true});
      f.push_back({m, false});
    }
    for (int k = 0; k < 2; ++k) {
      auto& f = factors_[k];
      for (int l = 0; l < d - 1; ++l) f.push_back({l, true});
      f.push_back({d - 1, k == 1});
    }
    if (phi_.value(c_) >= 0.0)
      throw Error(ErrorCode::ChartExtractionFailed, "radial chart center is not inside {phi < 0}");
  }
  bool closed() const override { return true; }
  Expr defining() const override { return F_; }

  void map(const Vec& q, Vec& u, Mat& T) const override {
    const int d = n_ - 1;
    Vec w(n_);
    Mat dw = Mat::Zero(n_, d);
    for (int k = 0; k < n_; ++k) {
      double p = 1.0;
      for (auto [ax, is_sin] : factors_[k]) p *= is_sin ? std::sin(q[ax]) : std::cos(q[ax]);
      w[k] = p;
      for (std::size_t f = 0; f < factors_[k].size(); ++f) {
        double dp = 1.0;
        for (std::size_t g = 0; g < factors_[k].size(); ++g) {
          auto [ax, is_sin] = factors_[k][g];
          if (g == f)
            dp *= is_sin ? std::cos(q[ax]) : -std::sin(q[ax]);
          else
            dp *= is_sin ? std::sin(q[ax]) : std::cos(q[ax]);
        }
        dw(k, factors_[k][f].first) += dp;
      }
    }
    double rmax = std::numeric_limits<double>::infinity();
    for (int k = 0; k < n_; ++k) {
      if (std::abs(w[k]) < 1e-300) continue;
      double bound = w[k] > 0 ? box_[k][1] : box_[k][0];
      rmax = std::min(rmax, (bound - c_[k]) / w[k]);
    }
    auto f = [&](double r) { return phi_.value(Vec(c_ + r * w)); };
    const int scan = 64;
    double a = 0.0, b = 0.0;
    bool found = false;
    for (int k = 1; k <= scan; ++k) {
      b = rmax * k / scan;
      if (f(b) >= 0.0) {
        found = true;
        break;
      }
      a = b;
    }
    if (!found) throw Error(ErrorCode::ChartExtractionFailed, "closed levelset leaves the bounding box");
    double r = bracketed_root(a, b, f(a), [&](double rr, double& dr) {
      JetValue j = phi_.jet(Vec(c_ + rr * w));
      dr = j.grad.dot(w);
      return j.value;
    });
    u = c_ + r * w;
    JetValue j = phi_.jet(u);
    double gw = j.grad.dot(w);
    if (std::abs(gw) < 1e-14) throw Error(ErrorCode::ChartExtractionFailed, "levelset tangent to a radial ray");
    T.resize(n_, d);
    for (int a2 = 0; a2 < d; ++a2) {
      double ra = -r * j.grad.dot(dw.col(a2)) / gw;
      T.col(a2) = r * dw.col(a2) + ra * w;
    }
  }

 private:
  int n_;
  CompiledExpr phi_;
  Expr F_;
  Vec c_;
  std::vector<std::array<double, 2>> box_;
  std::vector<std::vector<std::pair<int, bool>>> factors_;
};

int pick_levelset_axis(const Expr& phi, const std::vector<std::array<double, 2>>& box, int n) {
  CompiledExpr c(phi, n, 1);
  int per = n <= 3 ? 9 : (n <= 5 ? 5 : 3);
  std::size_t total = 1;
  for (int i = 0; i < n; ++i) total *= static_cast<std::size_t>(per);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  Vec x(n);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (int i = n - 1; i >= 0; --i) {
      int k = static_cast<int>(rem % per);
      rem /= per;
      x[i] = box[i][0] + (box[i][1] - box[i][0]) * k / (per - 1);
    }
    JetValue j;
    try {
      j = c.jet(x);
    } catch (const Error&) {
      continue;
    }
    for (int i = 0; i < n; ++i) best[i] = std::min(best[i], std::abs(j.grad[i]));
  }
  int axis = 0;
  for (int i = 1; i < n; ++i)
    if (best[i] > best[axis]) axis = i;
  return axis;
}

}  // namespace

// ---------------------------------------------------------------- pointwise geometry

FrameJet frame_jet(const Mat& A, const std::vector<Mat>& dA, const JetValue& f, int h) {
  FrameJet out;
  out.X = A.transpose() * f.grad;
  Mat AH = A.leftCols(h);
  out.XX = AH.transpose() * f.hess * AH;
  const int n = static_cast<int>(A.rows());
  // sum_l A_li sum_r (d_l A)_rj g_r
  for (int l = 0; l < n; ++l) {
    Vec t = dA[l].leftCols(h).transpose() * f.grad;  // over j
    if (t.isZero(0.0)) continue;
    for (int i = 0; i < h; ++i) {
      double a = A(l, i);
      if (a != 0.0) out.XX.row(i) += a * t.transpose();
    }
  }
  return out;
}

namespace {

struct LocalGeom {
  Vec nu, p_h_nu;
  double p_h_nu_norm = 0.0;
  bool characteristic = false;
  Vec nu_h, varpi, c_h_nu_h;
  double H = 0.0;
  Mat Dnu;
};

LocalGeom local_geometry(const CarnotGroup& g, const Vec& x, const JetValue& jf, double eps_char) {
  const int n = g.n(), h = g.h();
  Mat A = g.frame(x);
  std::vector<Mat> dA = g.frame_derivatives(x);
  FrameJet fj = frame_jet(A, dA, jf, h);
  LocalGeom L;
  double norm = fj.X.norm();
  if (!(norm >= 1e-14)) throw Error(ErrorCode::DegenerateDefiningFunction, "vanishing gradient of the defining function");
  L.nu = fj.X / norm;
  L.p_h_nu = L.nu.head(h);
  L.p_h_nu_norm = L.p_h_nu.norm();
  L.characteristic = L.p_h_nu_norm < eps_char;
  if (L.characteristic) return L;
  L.nu_h = L.p_h_nu / L.p_h_nu_norm;
  L.varpi = L.nu.tail(n - h) / L.p_h_nu_norm;
  L.c_h_nu_h = Vec::Zero(h);
  for (int a = h; a < n; ++a) {
    if (g.ord(a) != 2) continue;
    double w = L.varpi[a - h];
    if (w == 0.0) continue;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < h; ++j) L.c_h_nu_h[i] += w * g.C(a, i, j) * L.nu_h[j];
  }
  Vec gh = fj.X.head(h);
  double nh = gh.norm();
  L.Dnu = fj.XX / nh;
  Vec proj = fj.XX * gh;  // sum_j X_jF X_iX_jF
  L.Dnu -= proj * gh.transpose() / (nh * nh * nh);
  L.H = -L.Dnu.trace();
  return L;
}

}  // namespace

NormalInfo normals_at(const CarnotGroup& g, const Expr& phi, const Vec& x, double eps_char) {
  CompiledExpr c(phi, g.n(), 1);
  JetValue j = c.jet(x);
  j.hess = Mat::Zero(g.n(), g.n());
  Mat A = g.frame(x);
  Vec X = A.transpose() * j.grad;
  double norm = X.norm();
  if (!(norm >= 1e-14)) throw Error(ErrorCode::DegenerateDefiningFunction, "vanishing gradient of the defining function");
  NormalInfo out;
  out.nu = X / norm;
  out.p_h_nu = out.nu.head(g.h());
  out.p_h_nu_norm = out.p_h_nu.norm();
  if (out.p_h_nu_norm >= eps_char) out.nu_h = out.p_h_nu / out.p_h_nu_norm;
  return out;
}

double mean_curvature_H(const CarnotGroup& g, const Expr& phi, const Vec& x, double eps_char) {
  LocalGeom L = local_geometry(g, x, eval_jet(phi, x), eps_char);
  if (L.characteristic) throw Error(ErrorCode::CharacteristicPoint, "H_H undefined at a characteristic point");
  return L.H;
}

// ---------------------------------------------------------------- surface

Surface::~Surface() = default;
Surface::Surface(const Surface&) = default;
Surface& Surface::operator=(const Surface&) = default;

Surface::Surface(const CarnotGroup& g, SurfaceSpec spec) : g_(g), spec_(std::move(spec)) {
  const int n = g_.n(), d = n - 1;
  if (n < 2) throw Error(ErrorCode::InvalidInput, "hypersurfaces need n >= 2");
  std::shared_ptr<Chart> chart;
  std::unique_ptr<RawChart> raw;
  Expr Fbase;
  std::vector<int> raw_axes;
  if (spec_.kind == SurfaceSpec::Kind::graph) {
    int a = spec_.vertical;
    if (a < 0 || a >= n) throw Error(ErrorCode::IndexOutOfRange, "graph vertical axis out of range");
    if (g_.ord(a) < 2) throw Error(ErrorCode::InvalidInput, "graph vertical axis must be a vertical coordinate");
    if (depends_on(spec_.expr, a))
      throw Error(ErrorCode::InvalidInput, "graph profile may not depend on the vertical coordinate");
    if (spec_.region == SurfaceSpec::Region::box && static_cast<int>(spec_.box.size()) != d)
      throw Error(ErrorCode::InvalidInput, "graph domain needs " + std::to_string(d) + " intervals");
    Fbase = Expr::var(a) - spec_.expr;
    raw = std::make_unique<GraphRaw>(n, a, spec_.expr);
  } else {
    if (static_cast<int>(spec_.box.size()) != n)
      throw Error(ErrorCode::InvalidInput, "levelset box needs " + std::to_string(n) + " intervals");
    Fbase = spec_.expr;
    if (spec_.closed) {
      Vec c(n);
      if (spec_.center) {
        c = *spec_.center;
      } else {
        for (int i = 0; i < n; ++i) c[i] = 0.5 * (spec_.box[i][0] + spec_.box[i][1]);
      }
      chart = std::make_shared<RadialChart>(Fbase, n, c, spec_.box);
      ParamDomain dom;
      for (int a = 0; a < d; ++a) {
        bool azimuth = a == d - 1;
        dom.axes.push_back({0.0, azimuth ? 2.0 * M_PI : M_PI, 1, azimuth});
        dom.boundary.push_back({false, false});
        dom.collapses.push_back({!azimuth, !azimuth});
      }
      chart->dom = dom;
    } else {
      int axis = pick_levelset_axis(Fbase, spec_.box, n);
      raw = std::make_unique<LevelsetRaw>(n, axis, Fbase, spec_.box[axis][0], spec_.box[axis][1]);
      std::vector<std::array<double, 2>> pb;
      for (int i = 0; i < n; ++i)
        if (i != axis) pb.push_back(spec_.box[i]);
      ParamDomain dom;
      for (const auto& b : pb) {
        dom.axes.push_back({b[0], b[1], 1, false});
        dom.boundary.push_back({true, true});
        dom.collapses.push_back({false, false});
      }
      if (spec_.region == SurfaceSpec::Region::box) {
        chart = std::make_shared<BoxChart>(std::move(raw), Fbase);
        chart->dom = dom;
      }
    }
  }
  if (!chart) {
    if (spec_.region == SurfaceSpec::Region::box) {
      chart = std::make_shared<BoxChart>(std::move(raw), Fbase);
      ParamDomain dom;
      for (const auto& b : spec_.box) {
        if (!(b[1] > b[0])) throw Error(ErrorCode::InvalidInput, "empty parameter interval");
        dom.axes.push_back({b[0], b[1], 1, false});
        dom.boundary.push_back({true, true});
        dom.collapses.push_back({false, false});
      }
      chart->dom = dom;
    } else {
      if (d != 2) throw Error(ErrorCode::InvalidInput, "polar regions need a two-dimensional parameter plane");
      std::optional<Expr> region;
      ParamDomain dom;
      if (spec_.region == SurfaceSpec::Region::annulus) {
        if (!(spec_.r_outer > spec_.r_inner && spec_.r_inner >= 0.0))
          throw Error(ErrorCode::InvalidInput, "annulus needs 0 <= r_inner < r_outer");
        dom.axes.push_back({spec_.r_inner, spec_.r_outer, 1, false});
        dom.boundary.push_back({spec_.r_inner > 0.0, true});
        dom.collapses.push_back({spec_.r_inner == 0.0, false});
      } else {
        if (!(spec_.ball_radius > 0.0)) throw Error(ErrorCode::InvalidInput, "ball radius must be positive");
        // center point on the surface over region_center
        Vec s0(2), u0;
        Mat T0;
        s0 << spec_.region_center[0], spec_.region_center[1];
        raw->map(s0, u0, T0);
        ExprVec rel = sym_product(g_, constant_exprs(g_.inverse(u0)), coordinate_exprs(n));
        int p = norm_power(spec_.ball_norm, g_);
        region = norm_power_expr(spec_.ball_norm, g_, rel) - Expr(std::pow(spec_.ball_radius, p));
        dom.axes.push_back({0.0, 1.0, 1, false});
        dom.boundary.push_back({false, true});
        dom.collapses.push_back({true, false});
      }
      dom.axes.push_back({0.0, 2.0 * M_PI, 1, true});
      dom.boundary.push_back({false, false});
      dom.collapses.push_back({false, false});
      chart = std::make_shared<PolarChart>(std::move(raw), Fbase, spec_.region_center, region, n);
      chart->dom = dom;
    }
  }
  if (spec_.grid.empty()) spec_.grid.assign(d, 64);
  if (static_cast<int>(spec_.grid.size()) != d)
    throw Error(ErrorCode::InvalidInput, "grid needs " + std::to_string(d) + " entries");
  for (int a = 0; a < d; ++a) {
    if (spec_.grid[a] < 1) throw Error(ErrorCode::InvalidInput, "grid resolution must be >= 1");
    chart->dom.axes[a].cells = spec_.grid[a];
  }
  chart_ = chart;
  F_ = carry(chart_->defining());
  Fc_ = CompiledExpr(F_, n, 2);
  if (!spec_.transform.identity())
    for (const Expr& e : spec_.transform.forward_exprs(g_)) fwd_.emplace_back(e, n, 1);
}

const ParamDomain& Surface::domain() const { return chart_->dom; }
bool Surface::closed() const { return chart_->closed(); }

Surface Surface::with_grid(const std::vector<int>& cells) const {
  SurfaceSpec s = spec_;
  s.grid = cells;
  return Surface(g_, s);
}

Surface Surface::with_transform(const Transform& t) const {
  SurfaceSpec s = spec_;
  s.transform = spec_.transform.then(t);
  return Surface(g_, s);
}

Expr Surface::carry(const Expr& base) const {
  if (spec_.transform.identity()) return base;
  return substitute(base, spec_.transform.inverse_exprs(g_));
}

void Surface::base_map(const Vec& q, Vec& u, Mat& T) const { chart_->map(q, u, T); }

void Surface::map(const Vec& q, Vec& u, Mat& T) const {
  chart_->map(q, u, T);
  if (fwd_.empty()) return;
  const int n = g_.n();
  Vec v(n);
  Mat J(n, n);
  for (int r = 0; r < n; ++r) {
    JetValue j = fwd_[r].jet(u);
    v[r] = j.value;
    J.row(r) = j.grad.transpose();
  }
  u = v;
  T = J * T;
}

Vec Surface::point(const Vec& q) const {
  Vec u;
  Mat T;
  map(q, u, T);
  return u;
}

GeoSample Surface::sample_at(const Vec& q, double weight, double eps_char) const {
  GeoSample s;
  s.q = q;
  s.weight = weight;
  Mat T;
  map(q, s.x, T);
  const int h = g_.h(), d = dim();
  JetValue jf = Fc_.jet(s.x);
  LocalGeom L = local_geometry(g_, s.x, jf, eps_char);
  s.nu = L.nu;
  s.p_h_nu = L.p_h_nu;
  s.p_h_nu_norm = L.p_h_nu_norm;
  s.characteristic = L.characteristic;
  s.Tf = g_.frame_inverse(s.x) * T;
  Mat gm = s.Tf.transpose() * s.Tf;
  double det = gm.determinant();
  s.J_R = det > 0.0 ? std::sqrt(det) : 0.0;
  s.x_h = s.x.head(h);
  if (s.characteristic) {
    s.J_H = 0.0;
    s.P = Mat::Zero(h, d);
    return s;
  }
  s.nu_h = L.nu_h;
  s.varpi = L.varpi;
  s.c_h_nu_h = L.c_h_nu_h;
  s.H = L.H;
  s.Dnu = L.Dnu;
  s.J_H = s.p_h_nu_norm * s.J_R;
  s.g_h = s.x_h.dot(s.nu_h);
  s.x_hs = s.x_h - s.g_h * s.nu_h;
  if (s.J_R > 0.0) {
    Mat proj = Mat::Identity(h, h) - s.nu_h * s.nu_h.transpose();
    Mat B = s.Tf.topRows(h);
    s.P = proj * gm.ldlt().solve(B.transpose()).transpose();
  } else {
    s.P = Mat::Zero(h, d);
  }
  return s;
}

BoundarySample Surface::boundary_at(const Vec& q, int axis, int side, double weight, double eps_char) const {
  GeoSample g = sample_at(q, weight, eps_char);
  const int h = g_.h(), d = dim();
  BoundarySample b;
  b.q = q;
  b.x = g.x;
  b.axis = axis;
  b.side = side;
  b.weight = weight;
  b.p_h_nu_norm = g.p_h_nu_norm;
  Mat gm = g.Tf.transpose() * g.Tf;
  Vec ea = Vec::Zero(d);
  ea[axis] = 1.0;
  Vec ginv_a = gm.ldlt().solve(ea);
  b.eta = g.Tf * ginv_a / std::sqrt(ginv_a[axis]);
  if (side == 0) b.eta = -b.eta;
  Mat face(d - 1, d - 1);
  for (int i = 0, ii = 0; i < d; ++i) {
    if (i == axis) continue;
    for (int j = 0, jj = 0; j < d; ++j) {
      if (j == axis) continue;
      face(ii, jj++) = gm(i, j);
    }
    ++ii;
  }
  double fd = d > 1 ? face.determinant() : 1.0;
  b.J_R = fd > 0.0 ? std::sqrt(fd) : 0.0;
  if (g.characteristic) {
    b.p_hs_eta = Vec::Zero(h);
    b.pairing = Vec::Zero(h);
    return b;
  }
  b.p_hs_eta = b.eta.head(h) - g.nu_h.dot(b.eta.head(h)) * g.nu_h;
  b.p_hs_eta_norm = b.p_hs_eta.norm();
  b.h_weight = g.p_h_nu_norm * b.p_hs_eta_norm * b.J_R * weight;
  b.pairing = b.p_hs_eta * (g.p_h_nu_norm * b.J_R * weight);
  return b;
}

// ---------------------------------------------------------------- sampling

namespace {

void tensor_nodes(const std::vector<std::vector<double>>& pts, const std::vector<std::vector<double>>& wts,
                  std::vector<Vec>& q, std::vector<double>& w) {
  const int d = static_cast<int>(pts.size());
  std::size_t total = 1;
  for (const auto& p : pts) total *= p.size();
  q.assign(total, Vec(d));
  w.assign(total, 1.0);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    Vec v(d);
    double ww = 1.0;
    for (int a = d - 1; a >= 0; --a) {
      std::size_t k = rem % pts[a].size();
      rem /= pts[a].size();
      v[a] = pts[a][k];
      ww *= wts[a][k];
    }
    q[idx] = v;
    w[idx] = ww;
  }
}

}  // namespace

void quadrature_nodes(const ParamDomain& dom, QuadRule rule, std::vector<Vec>& q, std::vector<double>& w) {
  const int d = dom.dim();
  if (rule == QuadRule::midpoint) {
    std::vector<std::vector<double>> pts(d), wts(d);
    for (int a = 0; a < d; ++a) {
      const auto& ax = dom.axes[a];
      for (int i = 0; i < ax.cells; ++i) {
        pts[a].push_back(ax.lo + (i + 0.5) * ax.width());
        wts[a].push_back(ax.width());
      }
    }
    tensor_nodes(pts, wts, q, w);
    return;
  }
  // element-major Gauss points: cell index lexicographic (axis 0 slowest), then
  // local point bits with axis 0 slowest
  const double g0 = 0.5 - 0.5 / std::sqrt(3.0), g1 = 0.5 + 0.5 / std::sqrt(3.0);
  std::size_t cells = dom.cell_count();
  std::size_t local = std::size_t(1) << d;
  q.assign(cells * local, Vec(d));
  w.assign(cells * local, 0.0);
  for (std::size_t c = 0; c < cells; ++c) {
    std::vector<int> idx(d);
    std::size_t rem = c;
    for (int a = d - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % dom.axes[a].cells);
      rem /= dom.axes[a].cells;
    }
    for (std::size_t l = 0; l < local; ++l) {
      Vec v(d);
      double ww = 1.0;
      for (int a = 0; a < d; ++a) {
        bool bit = (l >> (d - 1 - a)) & 1u;
        const auto& ax = dom.axes[a];
        v[a] = ax.lo + (idx[a] + (bit ? g1 : g0)) * ax.width();
        ww *= 0.5 * ax.width();
      }
      q[c * local + l] = v;
      w[c * local + l] = ww;
    }
  }
}

std::vector<GeoSample> sample_points(const Surface& s, const std::vector<Vec>& q, const std::vector<double>& w,
                                     double eps_char) {
  std::vector<GeoSample> out(q.size());
  parallel_for(q.size(), [&](std::size_t i) { out[i] = s.sample_at(q[i], w[i], eps_char); });
  return out;
}

std::vector<BoundarySample> boundary_samples(const Surface& s, double eps_char) {
  const ParamDomain& dom = s.domain();
  const int d = dom.dim();
  std::vector<Vec> qs;
  std::vector<double> ws;
  std::vector<std::pair<int, int>> face;
  for (int a = 0; a < d; ++a)
    for (int side = 0; side < 2; ++side) {
      if (!dom.boundary[a][side]) continue;
      std::vector<std::vector<double>> pts(d), wts(d);
      for (int b = 0; b < d; ++b) {
        const auto& ax = dom.axes[b];
        if (b == a) {
          pts[b].push_back(side ? ax.hi : ax.lo);
          wts[b].push_back(1.0);
          continue;
        }
        for (int i = 0; i < ax.cells; ++i) {
          pts[b].push_back(ax.lo + (i + 0.5) * ax.width());
          wts[b].push_back(ax.width());
        }
      }
      std::vector<Vec> q;
      std::vector<double> w;
      tensor_nodes(pts, wts, q, w);
      for (std::size_t k = 0; k < q.size(); ++k) {
        qs.push_back(q[k]);
        ws.push_back(w[k]);
        face.emplace_back(a, side);
      }
    }
  std::vector<BoundarySample> out(qs.size());
  parallel_for(qs.size(), [&](std::size_t i) {
    out[i] = s.boundary_at(qs[i], face[i].first, face[i].second, ws[i], eps_char);
  });
  return out;
}

SurfaceSampling sample_surface(const Surface& s, double eps_char) {
  SurfaceSampling out;
  out.eps_char = eps_char;
  std::vector<Vec> q;
  std::vector<double> w;
  quadrature_nodes(s.domain(), QuadRule::midpoint, q, w);
  out.nodes = sample_points(s, q, w, eps_char);
  out.boundary = boundary_samples(s, eps_char);
  std::vector<double> mass;
  for (const auto& g : out.nodes)
    if (g.characteristic) {
      ++out.n_characteristic;
      mass.push_back(g.weight * g.J_R);
    }
  out.characteristic_mass_R = pairwise_sum(mass);
  return out;
}

double integrate_H(const std::vector<GeoSample>& nodes, const std::function<double(const GeoSample&)>& f) {
  std::vector<double> v(nodes.size(), 0.0);
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (!nodes[i].characteristic && nodes[i].J_H > 0.0) v[i] = nodes[i].weight * nodes[i].J_H * f(nodes[i]);
  return pairwise_sum(v);
}

double integrate_R(const std::vector<GeoSample>& nodes, const std::function<double(const GeoSample&)>& f) {
  std::vector<double> v(nodes.size(), 0.0);
  for (std::size_t i = 0; i < nodes.size(); ++i) v[i] = nodes[i].weight * nodes[i].J_R * f(nodes[i]);
  return pairwise_sum(v);
}

double h_perimeter(const std::vector<GeoSample>& nodes) {
  return integrate_H(nodes, [](const GeoSample&) { return 1.0; });
}

double boundary_pairing(const std::vector<BoundarySample>& b, const std::function<Vec(const BoundarySample&)>& X) {
  std::vector<double> v(b.size(), 0.0);
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[i].h_weight > 0.0 || b[i].pairing.norm() > 0.0) v[i] = X(b[i]).dot(b[i].pairing);
  return pairwise_sum(v);
}

double boundary_measure_H(const std::vector<BoundarySample>& b, const std::function<bool(const BoundarySample&)>& mask) {
  std::vector<double> v(b.size(), 0.0);
  for (std::size_t i = 0; i < b.size(); ++i)
    if (!mask || mask(b[i])) v[i] = b[i].h_weight;
  return pairwise_sum(v);
}

ProjectionMeasure vertical_projection_measure(const Surface& s, const std::vector<GeoSample>& nodes,
                                              const std::function<bool(const GeoSample&)>& region) {
  if (!s.is_graph()) throw Error(ErrorCode::InvalidInput, "vertical projection needs a graph surface");
  const int alpha = s.spec().vertical, h = s.group().h(), n = s.n();
  ProjectionMeasure pm;
  std::vector<double> qv(nodes.size(), 0.0), lv(nodes.size(), 0.0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const GeoSample& g = nodes[i];
    if (region && !region(g)) continue;
    if (!g.characteristic) qv[i] = g.varpi[alpha - h] * g.J_H * g.weight;
    Vec u;
    Mat T;
    s.map(g.q, u, T);
    Mat PT(n - 1, n - 1);
    for (int r = 0, rr = 0; r < n; ++r)
      if (r != alpha) PT.row(rr++) = T.row(r);
    lv[i] = std::abs(PT.determinant()) * g.weight;
  }
  pm.quadrature = pairwise_sum(qv);
  pm.lebesgue = pairwise_sum(lv);
  pm.discrepancy = std::abs(pm.quadrature - pm.lebesgue);
  return pm;
}

}  // namespace carnot
