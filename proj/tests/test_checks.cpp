#include <doctest.h>

#include <cmath>

#include "carnotgeo/checks.hpp"

using namespace carnot;

namespace {

Surface unit_patch(int cells) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::levelset;
  s.expr = parse("x1", 3);
  s.box = {{-1, 1}, {0, 1}, {0, 1}};
  s.grid = {cells, cells};
  return Surface(heisenberg(1), s);
}

Surface koranyi_sphere(int cells) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::levelset;
  s.closed = true;
  s.expr = parse("(x1^2 + x2^2)^2 + 16*x3^2 - 1", 3);
  s.box = {{-1.2, 1.2}, {-1.2, 1.2}, {-0.3, 0.3}};
  s.grid = {cells, 2 * cells};
  return Surface(heisenberg(1), s);
}

Surface graph(const std::string& expr, int cells, double half = 1.0) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::graph;
  s.vertical = 2;
  s.expr = parse(expr, 3);
  s.box = {{-half, half}, {-half, half}};
  s.grid = {cells, cells};
  return Surface(heisenberg(1), s);
}

Surface graph_disk(const std::string& expr, int cells, double radius) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::graph;
  s.vertical = 2;
  s.expr = parse(expr, 3);
  s.region = SurfaceSpec::Region::annulus;
  s.r_inner = 0.0;
  s.r_outer = radius;
  s.grid = {cells, 4 * cells};
  return Surface(heisenberg(1), s);
}

Surface plane_ball(int cells, double R) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::levelset;
  s.expr = parse("x1", 3);
  s.box = {{-1, 1}, {-2, 2}, {-2, 2}};
  s.region = SurfaceSpec::Region::ball;
  s.ball_radius = R;
  s.grid = {cells, cells};
  return Surface(heisenberg(1), s);
}

CheckOptions no_refine() {
  CheckOptions o;
  o.refine = false;
  return o;
}

}  // namespace

TEST_CASE("slicer: straight cut of the unit patch") {
  Surface p = unit_patch(16);
  Vec vals = vertex_values(p, parse("x3", 3));
  auto segs = level_segments(p.domain(), vals, 0.37);
  CHECK(!segs.empty());
  SliceMeasure m = slice_measure(p, segs);
  // {x3 = 0.37} in the plane x1 = 0: eta is vertical, so P_HS eta = 0
  CHECK(m.length_R == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m.measure_H == doctest::Approx(0.0));
  Vec v3 = vertex_values(p, parse("x2", 3));
  SliceMeasure m3 = slice_measure(p, v3, 0.37);
  CHECK(m3.measure_H == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("slicer: 3D parameter domains are rejected") {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::graph;
  s.vertical = 4;
  s.expr = parse("0", 5);
  s.box = {{-1, 1}, {-1, 1}, {-1, 1}, {-1, 1}};
  s.grid = {2, 2, 2, 2};
  Surface g(heisenberg(2), s);
  CHECK_THROWS_AS(level_segments(g.domain(), Vec::Zero(81), 0.0), Error);
}

TEST_CASE("report decision rules") {
  CheckReport r;
  r.kind = CheckKind::identity;
  r.tolerance = 1e-3;
  r.value = -5e-4;
  r.decide();
  CHECK(r.pass);
  r.value = 2e-3;
  r.decide();
  CHECK(!r.pass);
  r.kind = CheckKind::inequality;
  r.tolerance = 0.05;
  r.value = -0.04;
  r.decide();
  CHECK(r.pass);
  r.value = -0.06;
  r.decide();
  CHECK(!r.pass);
  r.value = NAN;
  r.decide();
  CHECK(!r.pass);
  r.put("a", 1.0);
  r.put("a", 2.0);
  CHECK(r.get("a") == 2.0);
  CHECK(r.quantities.size() == 1);
  CHECK_THROWS_AS(r.get("b"), Error);
}

TEST_CASE("weighted median") {
  CHECK(weighted_median({{1, 1}, {2, 1}, {3, 1}}) == 2);
  CHECK(weighted_median({{1, 5}, {2, 1}, {3, 1}}) == 1);
  CHECK_THROWS(weighted_median({}));
}

TEST_CASE("patch suite on the vertical unit patch") {
  Surface p = unit_patch(64);
  CheckReport mk = check_minkowski(p);
  CHECK(mk.pass);
  CHECK(mk.get("sigma_H") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mk.get("lhs") == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(mk.get("rhs_boundary") == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(mk.trace.size() == 2);

  CheckReport co = check_coarea(p, parse("x2", 3));
  CHECK(co.pass);
  CHECK(co.get("lhs_grad_integral") == doctest::Approx(1.0).epsilon(0.02));
  CHECK(co.get("rhs_slice_integral") == doctest::Approx(1.0).epsilon(0.02));

  CheckReport di = check_div_identities(p);
  CHECK(di.pass);
  CHECK(di.value < 1e-8);
}

TEST_CASE("coarea of a constant is zero on both sides") {
  CheckReport r = check_coarea(unit_patch(16), parse("2.5", 3), 50, no_refine());
  CHECK(r.pass);
  CHECK(r.get("lhs_grad_integral") == 0.0);
  CHECK(r.get("rhs_slice_integral") == 0.0);
}

TEST_CASE("coarea on a curved graph") {
  CheckReport r = check_coarea(graph("0.3*x1*x2 + 0.2*x1^2", 64), parse("x1 + 0.5*x2^2", 3), 200);
  CHECK(r.pass);
}

TEST_CASE("Minkowski and divergence identities on the Koranyi sphere") {
  Surface k = koranyi_sphere(32);
  CheckReport mk = check_minkowski(k);
  CHECK(mk.pass);
  CHECK(mk.get("sigma_H") == doctest::Approx(3.764069).epsilon(1e-4));
  CHECK(check_div_identities(k, no_refine(), 200).pass);
}

TEST_CASE("Heinz: flat plane has no curvature lower bound") {
  Surface p = graph("0", 16);
  try {
    check_heinz(p, Vec::Zero(3), {0.2, 0.4}, no_refine());
    FAIL("expected NoCurvatureLowerBound");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoCurvatureLowerBound);
  }
}

TEST_CASE("Heinz on a sphere-like graph") {
  // lower hemisphere-like cap with H bounded below away from the center
  Surface g = graph_disk("x1^2 + x2^2 + 0.5", 32, 0.9);
  std::vector<double> radii;
  for (int k = 1; k <= 20; ++k) radii.push_back(0.9 * k / 20.0);
  CheckReport r = check_heinz(g, Vec::Zero(3), radii, no_refine());
  CHECK(r.pass);
  for (const auto& p : r.series[1].points) CHECK(p[1] >= 0.0);
}

TEST_CASE("d xi lemma") {
  // H_H = 0 on planes; the quadrant faces pass through the characteristic point (0, -0.6)
  CheckReport flat = check_dxi_lemma(graph("0.3*x1", 64));
  CHECK(flat.pass);
  CHECK(std::abs(flat.get("boundary_flux")) < 1e-12);
  CHECK(std::abs(flat.get("minus_int_H_varpi")) < 1e-12);
  CheckReport curved = check_dxi_lemma(graph("0.4*x1^2 + 0.2*x2^2 + 0.1*x1*x2", 32, 0.8));
  CHECK(curved.pass);
  SurfaceSpec a;
  a.kind = SurfaceSpec::Kind::graph;
  a.vertical = 2;
  a.expr = parse("x1^2 + x2^2", 3);
  a.region = SurfaceSpec::Region::annulus;
  a.r_inner = 0.3;
  a.r_outer = 1.0;
  a.grid = {128, 128};
  CheckReport ann = check_dxi_lemma(Surface(heisenberg(1), a));
  CHECK(ann.pass);
  CHECK(ann.value < 1e-2);
  CHECK(ann.trace[1].value < ann.trace[0].value);
}

TEST_CASE("linear isoperimetric and monotonicity") {
  CHECK(check_linear_isoperimetric(koranyi_sphere(16), no_refine()).pass);
  CHECK(check_linear_isoperimetric(graph("0.3*x1*x2", 32), no_refine()).pass);
  CHECK(check_monotonicity(graph("0.3*x1^2", 48), Vec::Zero(3), {0.2, 0.3, 0.4, 0.5, 0.6, 0.7}, no_refine()).pass);
  CHECK_THROWS_AS(check_monotonicity(graph("0", 8), Vec::Zero(3), {0.1, 0.2}, no_refine()), Error);
}

TEST_CASE("eigenvalue chain on the plane ball") {
  Surface b = plane_ball(32, 1.0);
  CheckReport ch = check_cheeger_chain(b, no_refine());
  CHECK(ch.pass);
  CHECK(ch.get("eigen_residual") < 1e-8);
  std::vector<PlateauCandidate> cand(2);
  cand[0].kind = PlateauCandidate::Kind::boundary_plateau;
  cand[0].cut = parse("x2^2 + x3^2", 3);
  cand[0].level = 0.25;
  cand[0].eps = 0.2;
  cand[1].kind = PlateauCandidate::Kind::eigenfunction_sweep;
  CheckReport est = estimate_isop(b, cand, no_refine());
  CHECK(est.pass);
  CHECK(est.value > 0.0);
  CHECK_THROWS_AS(estimate_isop(b, {}, no_refine()), Error);
}

TEST_CASE("Chavel and Reilly on the Koranyi sphere") {
  Surface k = koranyi_sphere(16);
  CheckReport ch = check_chavel(k);
  CHECK(ch.pass);
  CHECK(ch.get("volume_voxels") == doctest::Approx(ch.get("volume_divergence")).epsilon(0.03));
  CheckReport re = check_reilly(k);
  CHECK(re.pass);
  CHECK_THROWS_AS(check_chavel(unit_patch(8)), Error);
}

TEST_CASE("Poincare on a UNC ball") {
  Surface b = plane_ball(32, 1.0);
  Vec c = Vec::Zero(3);
  CheckReport r = check_poincare(b, c, 0.5, {1, 2}, 10, no_refine());
  CHECK(r.pass);
  CHECK_THROWS_AS(check_poincare(b, c, 5.0, {1}, 2, no_refine()), Error);
  CheckReport rc = check_poincare_char(b, c, {1e-2, 1e-3}, {1, 2}, 4, no_refine());
  CHECK(rc.pass);
}

TEST_CASE("Poincare refuses characteristic domains") {
  // nodes never land on the characteristic origin, so sup |varpi| is finite but large
  CheckOptions o = no_refine();
  o.unc_cap = 10.0;
  try {
    check_poincare(graph("0", 16), Vec::Zero(3), 0.3, {1}, 2, o);
    FAIL("expected NotUNC");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotUNC);
  }
}

TEST_CASE("Caccioppoli with random polynomials") {
  Surface b = plane_ball(48, 1.0);
  for (std::uint64_t k = 0; k < 3; ++k) {
    CheckReport r = check_caccioppoli(b, Vec::Zero(3), 0.8, random_polynomial(3, 3, 11 + k), std::nullopt, no_refine());
    CHECK(r.pass);
    CHECK(r.get("C") >= 8.0);
  }
}

TEST_CASE("homogeneous norm properties") {
  CHECK(check_norm_properties(heisenberg(1), HomNormSpec::koranyi(), 500).pass);
  CHECK(check_norm_properties(heisenberg(2), HomNormSpec::koranyi(), 500).pass);
}

TEST_CASE("random test functions are deterministic and supported in the ball") {
  CarnotGroup g = heisenberg(1);
  auto a = random_bumps(g, HomNormSpec::koranyi(), Vec::Zero(3), 0.5, 4, 7);
  auto b = random_bumps(g, HomNormSpec::koranyi(), Vec::Zero(3), 0.5, 4, 7);
  REQUIRE(a.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(to_string(a[i]) == to_string(b[i]));
  Vec far(3);
  far << 0.6, 0.0, 0.0;
  for (const auto& e : a) CHECK(eval(e, far) == 0.0);
  CHECK(to_string(random_polynomial(3, 3, 1)) == to_string(random_polynomial(3, 3, 1)));
}

TEST_CASE("metamorphic: margins under dilation and translation") {
  Surface k = koranyi_sphere(16);
  CheckOptions o = no_refine();
  double base = check_chavel(k, o).value;
  Surface kd = k.with_transform(Transform::dilation(2.0));
  double dil = check_chavel(kd, o).value;
  CHECK(dil == doctest::Approx(base).epsilon(0.02));
  Vec a(3);
  a << 0.3, -0.2, 0.5;
  double tr = check_chavel(k.with_transform(Transform::translation(a)), o).value;
  CHECK(tr == doctest::Approx(base).epsilon(0.02));
}

TEST_CASE("Caccioppoli: constants and the x2 example") {
  Surface b = plane_ball(32, 1.0);
  CheckReport c = check_caccioppoli(b, Vec::Zero(3), 0.8, parse("1.7", 3), std::nullopt, no_refine());
  CHECK(c.pass);
  CHECK(c.get("lhs_grad_sq_half_ball") == 0.0);
  CHECK(c.get("rhs") == doctest::Approx(0.0));
  CheckReport x2 = check_caccioppoli(b, Vec::Zero(3), 0.8, parse("x2", 3), std::nullopt, no_refine());
  CHECK(x2.pass);
  CHECK(x2.get("int_psi_sq") == doctest::Approx(0.0));
  CHECK(x2.get("margin_display_constant") >= 0.0);
}

TEST_CASE("Poincare near characteristic points") {
  Surface b = plane_ball(32, 1.0);
  Vec c = Vec::Zero(3);
  // R_0 keeps the C(1 + |varpi|) term even without characteristic points, so compare at R_0 = 1/2
  CheckReport p = check_poincare(b, c, 0.5, {1, 2}, 4, no_refine());
  CheckReport pc = check_poincare_char(b, c, {1e-2, 1e-3}, {1, 2}, 4, no_refine());
  CHECK(p.get("R") == doctest::Approx(pc.get("R0")).epsilon(1e-12));
  CHECK(std::abs(p.value - pc.value) < 1e-10);

  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::graph;
  s.vertical = 2;
  s.expr = parse("0.25*(x1^2 + x2^2)", 3);
  s.region = SurfaceSpec::Region::annulus;
  s.r_inner = 0.0;
  s.r_outer = 1.0;
  s.grid = {48, 96};
  Surface para(heisenberg(1), s);
  CheckReport r = check_poincare_char(para, c, {0.2, 0.1, 0.05}, {1}, 4, no_refine());
  CHECK(r.pass);
  const auto& m = r.series[0].points;
  for (std::size_t k = 1; k < m.size(); ++k) CHECK(m[k][1] <= m[k - 1][1]);
}
