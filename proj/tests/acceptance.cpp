// Acceptance suite: one line per criterion, nonzero exit when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "carnotgeo/checks.hpp"
#include "carnotgeo/cli/commands.hpp"

using namespace carnot;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------- surfaces

CarnotGroup h1() { return heisenberg(1); }

Surface levelset(const CarnotGroup& g, const std::string& expr, std::vector<std::array<double, 2>> box,
                 std::vector<int> grid, bool closed = false) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::levelset;
  s.expr = parse(expr, g.n());
  s.box = std::move(box);
  s.grid = std::move(grid);
  s.closed = closed;
  return Surface(g, s);
}

Surface unit_patch(int c) { return levelset(h1(), "x1", {{-1, 1}, {0, 1}, {0, 1}}, {c, c}); }

Surface koranyi_sphere(int c) {
  return levelset(h1(), "(x1^2 + x2^2)^2 + 16*x3^2 - 1", {{-1.2, 1.2}, {-1.2, 1.2}, {-0.3, 0.3}}, {c, 2 * c}, true);
}

Surface h2_ellipsoid(int c) {
  return levelset(heisenberg(2), "x1^2 + x2^2 + x3^2 + x4^2 + 2*x5^2 - 1",
                  {{-1.2, 1.2}, {-1.2, 1.2}, {-1.2, 1.2}, {-1.2, 1.2}, {-0.8, 0.8}}, {c, c, c, 2 * c}, true);
}

Surface plane_ball(int c, double R = 1.0) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::levelset;
  s.expr = parse("x1", 3);
  s.box = {{-1, 1}, {-2, 2}, {-2, 2}};
  s.region = SurfaceSpec::Region::ball;
  s.ball_radius = R;
  s.grid = {c, c};
  return Surface(h1(), s);
}

Surface graph_box(const std::string& expr, int c) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::graph;
  s.vertical = 2;
  s.expr = parse(expr, 3);
  s.box = {{-1, 1}, {-1, 1}};
  s.grid = {c, c};
  return Surface(h1(), s);
}

Surface graph_disk(const std::string& expr, int c, double radius) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::graph;
  s.vertical = 2;
  s.expr = parse(expr, 3);
  s.region = SurfaceSpec::Region::annulus;
  s.r_inner = 0.0;
  s.r_outer = radius;
  s.grid = {c, 4 * c};
  return Surface(h1(), s);
}

// Korányi ball of radius 0.5 about (1, 0, 0.25) on t = (x^2 + y^2) / 4; the
// characteristic point sits at the origin, outside the ball
Surface paraboloid_ball(int c) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::graph;
  s.vertical = 2;
  s.expr = parse("0.25*(x1^2 + x2^2)", 3);
  s.region = SurfaceSpec::Region::ball;
  s.region_center = {1.0, 0.0};
  s.ball_radius = 0.5;
  s.grid = {c, c};
  return Surface(h1(), s);
}
const Vec kParaboloidCenter = (Vec(3) << 1.0, 0.0, 0.25).finished();

const char* kSaddle = "0.3*x1*x2 + 0.2*x1^2";

CheckOptions opts(bool refine) {
  CheckOptions o;
  o.refine = refine;
  o.seed = 24301;
  return o;
}

// ---------------------------------------------------------------- criteria

Outcome algebra_exactness() {
  auto t0 = Clock::now();
  std::vector<std::pair<std::string, CarnotGroup>> groups = {{"H1", heisenberg(1)},
                                                             {"H2", heisenberg(2)},
                                                             {"F(3,2)", free_step2(3)},
                                                             {"H1xR2", product_with_euclidean(heisenberg(1), 2)}};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1.0, 1.0), T(0.25, 4.0);
  double assoc = 0, autom = 0, det = 0, div_num = 0, div_sym = 0;
  for (auto& [name, g] : groups) {
    const int n = g.n(), h = g.h();
    ExprVec xs = coordinate_exprs(n);
    Expr div = 0.0;
    for (int i = 0; i < h; ++i) div = div + sym_frame_gradient(g, xs[i])[i];
    CompiledExpr divc(div, n, 0);
    for (int k = 0; k < 1000; ++k) {
      Vec x(n), y(n), z(n);
      for (int i = 0; i < n; ++i) x[i] = U(rng), y[i] = U(rng), z[i] = U(rng);
      double t = T(rng);
      assoc = std::max(assoc, (g.product(g.product(x, y), z) - g.product(x, g.product(y, z))).cwiseAbs().maxCoeff());
      autom = std::max(autom,
                       (g.dilate(t, g.product(x, y)) - g.product(g.dilate(t, x), g.dilate(t, y))).cwiseAbs().maxCoeff());
      det = std::max(det, std::abs(g.frame(x).determinant() - 1.0));
      div_num = std::max(div_num, std::abs(g.div_h_position(x) - h));
      div_sym = std::max(div_sym, std::abs(divc.value(x) - h));
    }
  }
  // independent oracle: the Heisenberg group as unipotent 3x3 matrices with
  // X1 = E12, X2 = E23, X3 = E13, product read off through log(I + N) = N - N^2/2
  double matrix = 0.0;
  CarnotGroup g = heisenberg(1);
  auto to_matrix = [](const Vec& x) {
    Eigen::Matrix3d N = Eigen::Matrix3d::Zero();
    N(0, 1) = x[0], N(1, 2) = x[1], N(0, 2) = x[2];
    return Eigen::Matrix3d(Eigen::Matrix3d::Identity() + N + 0.5 * N * N);
  };
  for (int k = 0; k < 1000; ++k) {
    Vec x(3), y(3);
    for (int i = 0; i < 3; ++i) x[i] = U(rng), y[i] = U(rng);
    Eigen::Matrix3d N = to_matrix(x) * to_matrix(y) - Eigen::Matrix3d::Identity();
    Eigen::Matrix3d L = N - 0.5 * N * N;
    Vec expect(3);
    expect << L(0, 1), L(1, 2), L(0, 2);
    matrix = std::max(matrix, (g.product(x, y) - expect).cwiseAbs().maxCoeff());
  }
  double dt = seconds_since(t0);
  double worst = std::max({assoc, autom, det, div_num, div_sym, matrix});
  std::ostringstream d;
  d << "assoc " << assoc << ", dilation " << autom << ", det " << det << ", div_H x_H " << div_num << "/" << div_sym
    << " (numeric/symbolic), matrix oracle " << matrix << ", " << fmt("%.2f s", dt);
  return {worst <= 1e-12 && dt < 5.0, d.str()};
}

Outcome pointwise_identity() {
  std::vector<std::pair<std::string, Surface>> surfaces = {
      {"patch", unit_patch(32)},
      {"koranyi", koranyi_sphere(32)},
      {"plane_ball", plane_ball(32)},
      {"paraboloid_disk", graph_disk("0.25*(x1^2 + x2^2)", 24, 1.0)},
      {"paraboloid_ball", paraboloid_ball(32)},
      {"saddle", graph_box(kSaddle, 32)},
      {"cap", graph_disk("x1^2 + x2^2 + 0.5", 24, 0.9)},
      {"h2_ellipsoid", h2_ellipsoid(8)}};
  double worst = 0.0, worst_div = 0.0;
  int nodes = 0;
  for (auto& [name, s] : surfaces) {
    CheckReport r = check_div_identities(s, opts(false), 50);
    worst = std::max(worst, r.get("grad_HS_coordinate_identity_max_error"));
    worst_div = std::max(worst_div, r.get("div_H_x_H_max_error"));
    nodes += static_cast<int>(r.get("regular_nodes"));
  }
  std::ostringstream d;
  d << "max |sum |grad_HS x_i|^2 - (h-1)| = " << worst << " over " << nodes << " regular nodes on "
    << surfaces.size() << " surfaces; max |div_H x_H - h| = " << worst_div;
  return {worst <= 1e-8 && worst_div <= 1e-8, d.str()};
}

Outcome patch_suite() {
  auto t0 = Clock::now();
  Surface p = unit_patch(128);
  CheckOptions o = opts(true);
  SurfaceSampling samp = sample_surface(p, o.eps_char);
  double sigma = h_perimeter(samp.nodes);
  CheckReport mk = check_minkowski(p, o);
  CheckReport co = check_coarea(p, parse("x2", 3), 200, o);
  // X = (x1 x3, 1 + x2 x3): D_HS X = x3 on the patch, boundary flux 3/2 - 1
  std::vector<BoundarySample> bd = boundary_samples(p, o.eps_char);
  ExprVec X = {parse("x1*x3", 3), parse("1 + x2*x3", 3)};
  PartsResidual ibp = integration_by_parts_residual(p.group(), samp.nodes, bd, X);
  double dt = seconds_since(t0);
  double lhs = mk.get("lhs"), rhs = mk.get("rhs_boundary");
  double cl = co.get("lhs_grad_integral"), cr = co.get("rhs_slice_integral");
  bool ok = std::abs(sigma - 1.0) < 1e-12 && std::abs(lhs - 1.0) < 1e-6 && std::abs(rhs - 1.0) < 1e-6 &&
            mk.pass && mk.value < 1e-6 && std::abs(cl - 1.0) < 0.02 && std::abs(cr - 1.0) < 0.02 && co.pass &&
            ibp.residual < 1e-6 && std::abs(ibp.lhs - 0.5) < 1e-6 && dt < 10.0;
  std::ostringstream d;
  d << "sigma_H " << sigma << ", Minkowski " << lhs << " = " << rhs << " (residual " << mk.value << "), coarea "
    << cl << " vs " << cr << ", parts residual " << ibp.residual << " (lhs " << ibp.lhs << "), "
    << fmt("%.2f s", dt);
  return {ok, d.str()};
}

Outcome koranyi_minkowski() {
  auto t0 = Clock::now();
  CheckReport r = check_minkowski(koranyi_sphere(128), opts(true));
  double dt = seconds_since(t0);
  bool ok = r.pass && r.value <= 1e-2 && r.trace.size() == 2 && dt < 60.0;
  std::ostringstream d;
  for (const TracePoint& t : r.trace) d << t.grid << ": " << t.value << ", ";
  d << "sigma_H " << r.get("sigma_H") << ", " << fmt("%.2f s", dt);
  for (const std::string& n : r.notes) d << "; " << n;
  return {ok, d.str()};
}

double first_dirichlet(const Surface& s) {
  EigenResult e = eigensolve(assemble(s, BoundaryCondition::dirichlet), 1);
  return e.eigenvalues.at(0);
}

Outcome eigen_convergence() {
  double l64 = first_dirichlet(plane_ball(64));
  double l128 = first_dirichlet(plane_ball(128));
  double rel = std::abs(l128 - l64) / l128;
  double l2 = first_dirichlet(plane_ball(64).with_transform(Transform::dilation(2.0)));
  double lh = first_dirichlet(plane_ball(64).with_transform(Transform::dilation(0.5)));
  double s2 = std::abs(l2 * 4.0 - l64) / l64, sh = std::abs(lh / 4.0 - l64) / l64;
  std::ostringstream d;
  d << "lambda1 " << l64 << " (64^2) -> " << l128 << " (128^2), change " << rel << "; t^2 lambda_t / lambda - 1: "
    << s2 << " (t=2), " << sh << " (t=1/2)";
  return {rel < 0.02 && s2 < 0.02 && sh < 0.02, d.str()};
}

template <class F>
Outcome across(const std::vector<std::pair<std::string, Surface>>& surfaces, F check, bool refine = true) {
  bool ok = true;
  std::ostringstream d;
  for (auto& [name, s] : surfaces) {
    CheckReport r = check(s, opts(refine));
    ok = ok && r.pass && r.value >= 0.0;
    d << name << " " << fmt("%.4g", r.value) << (r.pass ? "" : " FAIL") << "; ";
  }
  std::string s = d.str();
  return {ok, "margins: " + s.substr(0, s.size() - 2)};
}

Outcome cheeger_chain() {
  Outcome o = across({{"plane_ball", plane_ball(64)},
                      {"koranyi", koranyi_sphere(32)},
                      {"paraboloid_disk", graph_disk("0.25*(x1^2 + x2^2)", 24, 1.0)},
                      {"paraboloid_ball", paraboloid_ball(32)},
                      {"saddle", graph_box(kSaddle, 48)},
                      {"h2_ellipsoid", h2_ellipsoid(8)}},
                     [](const Surface& s, const CheckOptions& o) { return check_cheeger_chain(s, o); });
  return o;
}

Outcome chavel_reilly() {
  auto chavel = [](const Surface& s, const CheckOptions& o) { return check_chavel(s, o); };
  auto reilly = [](const Surface& s, const CheckOptions& o) { return check_reilly(s, o); };
  std::vector<std::pair<std::string, Surface>> surfaces = {{"koranyi", koranyi_sphere(32)},
                                                           {"h2_ellipsoid", h2_ellipsoid(8)}};
  Outcome c = across(surfaces, chavel);
  Outcome r = across(surfaces, reilly);
  // dilation invariance of the normalized Chavel margin (no refinement: the
  // base and dilated surfaces share the grid, so one level is enough)
  double worst = 0.0;
  for (auto& [name, s] : surfaces) {
    double base = check_chavel(s, opts(false)).value;
    for (double t : {2.0, 0.5}) {
      if (name == "h2_ellipsoid" && t != 2.0) continue;
      double v = check_chavel(s.with_transform(Transform::dilation(t)), opts(false)).value;
      worst = std::max(worst, std::abs(v - base) / std::abs(base));
    }
  }
  std::ostringstream d;
  d << "chavel " << c.detail << " | reilly " << r.detail << " | chavel dilation drift " << worst;
  return {c.pass && r.pass && worst <= 0.02, d.str()};
}

Outcome heinz() {
  std::vector<double> radii;
  for (int k = 1; k <= 20; ++k) radii.push_back(0.045 * k);
  CheckReport r = check_heinz(graph_disk("x1^2 + x2^2 + 0.5", 48, 0.9), Vec::Zero(3), radii, opts(true));
  // series: area margin, radius margin, C, each against r
  bool ok = r.pass && r.series.size() >= 3;
  double worst_area = 1e300, worst_radius = 1e300;
  for (std::size_t k = 0; ok && k < radii.size(); ++k) {
    double ma = r.series[0].points.at(k)[1], mr = r.series[1].points.at(k)[1];
    worst_area = std::min(worst_area, ma);
    worst_radius = std::min(worst_radius, mr);
    ok = ok && ma >= 0.0 && mr >= 0.0;
  }
  std::ostringstream d;
  d << radii.size() << " radii; min area margin " << worst_area << ", min radius margin (r <= 2/C) " << worst_radius;
  return {ok, d.str()};
}

Outcome poincare() {
  bool ok = true;
  std::ostringstream d;
  struct Case {
    std::string name;
    Surface s;
    Vec center;
  };
  std::vector<Case> cases = {{"plane_ball", plane_ball(64), Vec::Zero(3)},
                             {"paraboloid_ball", paraboloid_ball(48), kParaboloidCenter}};
  for (auto& c : cases) {
    CheckReport r = check_poincare(c.s, c.center, std::nullopt, {1, 2}, 10, opts(true));
    ok = ok && r.pass && r.value >= 0.0;
    d << c.name << " R " << fmt("%.3g", r.get("R")) << " min margin " << fmt("%.4g", r.value) << "; ";
  }
  // near a characteristic point: the horizontal plane t = 0
  Surface flat = graph_disk("0", 64, 1.0);
  CheckReport rc = check_poincare_char(flat, Vec::Zero(3), {0.44, 0.42, 0.4}, {1, 2}, 10, opts(true));
  ok = ok && rc.pass && rc.value >= 0.0 && rc.get("diam_S_R") > 0.0;
  d << "flat disk (characteristic) R0 " << fmt("%.3g", rc.get("R0")) << " min margin " << fmt("%.4g", rc.value);
  return {ok, d.str()};
}

Outcome caccioppoli() {
  bool ok = true;
  double worst = 1e300;
  struct Case {
    Surface s;
    Vec center;
    double R;
  };
  std::vector<Case> cases = {{plane_ball(64), Vec::Zero(3), 0.8}, {paraboloid_ball(48), kParaboloidCenter, 0.4}};
  int runs = 0;
  for (auto& c : cases) {
    for (int k = 0; k < 10; ++k) {
      Expr phi = random_polynomial(3, 3, 24301 + k);
      CheckReport r = check_caccioppoli(c.s, c.center, c.R, phi, std::nullopt, opts(false));
      ok = ok && r.pass && r.value >= 0.0;
      worst = std::min(worst, r.value);
      ++runs;
    }
  }
  return {ok, std::to_string(runs) + " random polynomials of degree <= 3 on two balls; min margin " +
                  fmt("%.4g", worst)};
}

Outcome metamorphic() {
  using Check = std::function<CheckReport(const Surface&, const CheckOptions&)>;
  std::vector<double> radii = {0.2, 0.3, 0.4, 0.5, 0.6};
  std::vector<double> heinz_radii;
  for (int k = 1; k <= 10; ++k) heinz_radii.push_back(0.09 * k);
  struct Case {
    std::string name;
    Surface s;
    Check check;
  };
  std::vector<Case> cases = {
      {"linear_isoperimetric/koranyi", koranyi_sphere(32),
       [](const Surface& s, const CheckOptions& o) { return check_linear_isoperimetric(s, o); }},
      {"linear_isoperimetric/saddle", graph_box(kSaddle, 32),
       [](const Surface& s, const CheckOptions& o) { return check_linear_isoperimetric(s, o); }},
      {"monotonicity/saddle", graph_box(kSaddle, 32),
       [radii](const Surface& s, const CheckOptions& o) { return check_monotonicity(s, Vec::Zero(3), radii, o); }},
      {"heinz/cap", graph_disk("x1^2 + x2^2 + 0.5", 24, 0.9),
       [heinz_radii](const Surface& s, const CheckOptions& o) {
         return check_heinz(s, Vec::Zero(3), heinz_radii, o);
       }},
      {"cheeger_chain/plane_ball", plane_ball(32),
       [](const Surface& s, const CheckOptions& o) { return check_cheeger_chain(s, o); }},
      {"chavel/koranyi", koranyi_sphere(24),
       [](const Surface& s, const CheckOptions& o) { return check_chavel(s, o); }},
      {"reilly/koranyi", koranyi_sphere(24),
       [](const Surface& s, const CheckOptions& o) { return check_reilly(s, o); }},
      {"poincare/plane_ball", plane_ball(32),
       [](const Surface& s, const CheckOptions& o) {
         return check_poincare(s, Vec::Zero(3), std::nullopt, {1, 2}, 4, o);
       }},
      {"poincare/paraboloid_ball", paraboloid_ball(32),
       [](const Surface& s, const CheckOptions& o) {
         return check_poincare(s, kParaboloidCenter, std::nullopt, {1, 2}, 4, o);
       }},
      {"poincare_char/flat_disk", graph_disk("0", 32, 1.0),
       [](const Surface& s, const CheckOptions& o) {
         return check_poincare_char(s, Vec::Zero(3), {0.44, 0.4}, {1}, 4, o);
       }},
      {"caccioppoli/plane_ball", plane_ball(32),
       [](const Surface& s, const CheckOptions& o) {
         return check_caccioppoli(s, Vec::Zero(3), 0.8, random_polynomial(3, 3, 11), std::nullopt, o);
       }},
  };
  std::vector<std::pair<std::string, Transform>> transforms = {{"dilate 1/2", Transform::dilation(0.5)},
                                                               {"dilate 2", Transform::dilation(2.0)}};
  std::mt19937_64 rng(24301);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int k = 0; k < 5; ++k) {
    Vec a(3);
    for (int i = 0; i < 3; ++i) a[i] = U(rng);
    transforms.push_back({"translate " + std::to_string(k), Transform::translation(a)});
  }
  int compared = 0;
  std::vector<std::string> flips;
  double drift = 0.0;
  std::string drift_at;
  for (auto& c : cases) {
    double base = c.check(c.s, opts(false)).value;
    for (auto& [tname, t] : transforms) {
      double v = c.check(c.s.with_transform(t), opts(false)).value;
      ++compared;
      if ((v >= 0.0) != (base >= 0.0)) flips.push_back(c.name + " under " + tname);
      if (std::abs(v - base) > drift) drift = std::abs(v - base), drift_at = c.name + " under " + tname;
    }
  }
  std::ostringstream d;
  d << compared << " transformed runs over " << cases.size() << " inequality checks, " << flips.size()
    << " sign flips, max margin drift " << drift << " (" << drift_at << ")";
  for (const std::string& f : flips) d << "; " << f;
  return {flips.empty(), d.str()};
}

Outcome determinism() {
  using namespace carnot::cli;
  const std::string path = std::string(CARNOTGEO_CONFIG_DIR) + "/full_suite.json";
  RunConfig cfg = parse_config(read_json_file(path));
  auto t0 = Clock::now();
  RunOutcome a = run_checks(cfg, Overrides{});
  double dt = seconds_since(t0);
  RunOutcome b = run_checks(cfg, Overrides{});
  std::string da = a.reports.dump(2), db = b.reports.dump(2);
  bool same = da == db && a.summary == b.summary;
  std::ostringstream d;
  d << a.reports.size() << " reports, " << da.size() << " bytes, " << (same ? "identical" : "DIFFERENT")
    << " across two runs, exit code " << a.exit_code << ", " << fmt("%.1f s per run", dt);
  return {same && a.exit_code == kPass && dt < 600.0, d.str()};
}

}  // namespace

// optional argument: run only the criteria whose name contains it
int main(int argc, char** argv) {
  const std::string only = argc > 1 ? argv[1] : "";
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"algebra_exactness", algebra_exactness},
      {"pointwise_gradient_identity", pointwise_identity},
      {"vertical_patch_suite", patch_suite},
      {"koranyi_minkowski_refinement", koranyi_minkowski},
      {"eigen_convergence_and_scaling", eigen_convergence},
      {"cheeger_chain", cheeger_chain},
      {"chavel_reilly_bounds", chavel_reilly},
      {"heinz_cylinders", heinz},
      {"poincare_unc_and_characteristic", poincare},
      {"caccioppoli_random_polynomials", caccioppoli},
      {"metamorphic_sign_invariance", metamorphic},
      {"determinism", determinism},
  };
  int failed = 0, ran = 0;
  for (auto& [name, fn] : criteria) {
    if (name.find(only) == std::string::npos) continue;
    ++ran;
    auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << " (" << fmt("%.1f s", seconds_since(t0)) << ") "
              << o.detail << std::endl;
  }
  std::cout << (ran - failed) << "/" << ran << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
