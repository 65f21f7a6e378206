#include <doctest.h>

#include <cmath>
#include <random>

#include "carnotgeo/operators.hpp"
#include "carnotgeo/parallel.hpp"

using namespace carnot;

namespace {

Surface plane_patch(int cells) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::levelset;
  s.expr = parse("x1", 3);
  s.box = {{-1, 1}, {0, 1}, {0, 1}};
  s.grid = {cells, cells};
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

Surface koranyi_sphere(int cells) {
  SurfaceSpec s;
  s.kind = SurfaceSpec::Kind::levelset;
  s.closed = true;
  s.expr = parse("(x1^2 + x2^2)^2 + 16*x3^2 - 1", 3);
  s.box = {{-1.2, 1.2}, {-1.2, 1.2}, {-0.3, 0.3}};
  s.grid = {cells, 2 * cells};
  return Surface(heisenberg(1), s);
}

// x_HS as ambient expressions, using the level-set extension of nu_H
ExprVec x_hs_exprs(const CarnotGroup& g, const Expr& F) {
  ExprVec XF = sym_frame_gradient(g, F);
  const int h = g.h();
  Expr nn(0.0), gh(0.0);
  for (int i = 0; i < h; ++i) nn = nn + XF[i] * XF[i];
  Expr norm = sqrt(nn);
  for (int i = 0; i < h; ++i) gh = gh + Expr::var(i) * XF[i] / norm;
  ExprVec out;
  for (int i = 0; i < h; ++i) out.push_back(Expr::var(i) - gh * XF[i] / norm);
  return out;
}

}  // namespace

TEST_CASE("grad_HS examples") {
  CarnotGroup g = heisenberg(1);
  Surface p = plane_patch(8);
  auto nodes = sample_surface(p).nodes;
  for (const auto& v : grad_hs(g, nodes, parse("3.5", 3))) CHECK(v.norm() == 0.0);
  for (const auto& v : grad_hs(g, nodes, parse("x2", 3))) {
    CHECK(v[0] == 0.0);
    CHECK(v[1] == doctest::Approx(1.0));
  }
  Surface k = koranyi_sphere(16);
  auto kn = sample_surface(k).nodes;
  for (std::size_t i = 0; i < kn.size(); i += 7) {
    double sum = 0.0;
    for (int c = 0; c < 2; ++c) sum += grad_hs(g, kn[i], CompiledExpr(Expr::var(c), 3, 1)).squaredNorm();
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("D_HS examples") {
  CarnotGroup g = heisenberg(1);
  auto nodes = sample_surface(plane_patch(8)).nodes;
  for (double v : dhs_apply(g, nodes, {Expr(0.0), parse("x2", 3)})) CHECK(v == doctest::Approx(1.0));
  for (double v : dhs_apply(g, nodes, {Expr(0.0), Expr(0.0)})) CHECK(v == 0.0);

  Surface k = koranyi_sphere(16);
  auto kn = sample_surface(k).nodes;
  std::vector<double> d = dhs_apply(g, kn, x_hs_exprs(g, k.defining()));
  for (std::size_t i = 0; i < kn.size(); ++i) {
    const GeoSample& s = kn[i];
    double expected = 1.0 + s.g_h * s.H + s.c_h_nu_h.dot(s.x_hs);
    CHECK(std::abs(d[i] - expected) < 1e-9);
  }
}

TEST_CASE("product rule for D_HS") {
  CarnotGroup g = heisenberg(1);
  Surface k = koranyi_sphere(8);
  auto kn = sample_surface(k).nodes;
  Expr phi = parse("1 + x1*x3 - x2^2", 3);
  ExprVec X = x_hs_exprs(g, k.defining());
  ExprVec pX = {phi * X[0], phi * X[1]};
  auto a = dhs_apply(g, kn, pX), b = dhs_apply(g, kn, X);
  auto gp = grad_hs(g, kn, phi);
  CompiledExpr pc(phi, 3, 1), x0(X[0], 3, 1), x1(X[1], 3, 1);
  for (std::size_t i = 0; i < kn.size(); ++i) {
    Vec xv(2);
    xv << x0.value(kn[i].x), x1.value(kn[i].x);
    CHECK(std::abs(a[i] - (pc.value(kn[i].x) * b[i] + gp[i].dot(xv))) < 1e-9);
  }
}

TEST_CASE("strong L_HS") {
  CarnotGroup g = heisenberg(1);
  auto nodes = sample_surface(plane_patch(8)).nodes;
  for (double v : lhs_apply_strong(g, nodes, parse("x2^2", 3))) CHECK(v == doctest::Approx(2.0));
  for (double v : lhs_apply_strong(g, nodes, parse("7", 3))) CHECK(v == 0.0);
  // with C_H nu_H = 0, L_HS is Delta_HS = X2 X2 on the plane x1 = 0
  Expr phi = parse("x2^3*x3 + sin(x3)*x2", 3);
  auto l = lhs_apply_strong(g, nodes, phi);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    double y = nodes[i].x[1], t = nodes[i].x[2];
    CHECK(std::abs(l[i] - 6 * y * t) < 1e-10);
  }
  // L_HS = D_HS grad_HS against the symbolic composition on the sphere
  Surface k = koranyi_sphere(8);
  auto kn = sample_surface(k).nodes;
  Expr f = parse("x1*x2 + x3^2 - x1", 3);
  ExprVec XF = sym_frame_gradient(g, k.defining()), Xf = sym_frame_gradient(g, f);
  Expr nn = sqrt(XF[0] * XF[0] + XF[1] * XF[1]);
  Expr dot = (Xf[0] * XF[0] + Xf[1] * XF[1]) / nn;
  ExprVec grad = {Xf[0] - dot * XF[0] / nn, Xf[1] - dot * XF[1] / nn};
  auto a = lhs_apply_strong(g, kn, f), b = dhs_apply(g, kn, grad);
  for (std::size_t i = 0; i < kn.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-8);
}

TEST_CASE("integration by parts") {
  CarnotGroup g = heisenberg(1);
  auto samp = sample_surface(plane_patch(32));
  PartsResidual r = integration_by_parts_residual(g, samp.nodes, samp.boundary, {Expr(0.0), parse("x2", 3)});
  CHECK(r.lhs == doctest::Approx(1.0));
  CHECK(r.boundary == doctest::Approx(1.0));
  CHECK(r.residual < 1e-6);
  r = integration_by_parts_residual(g, samp.nodes, samp.boundary, {Expr(0.0), Expr(0.0)});
  CHECK(r.residual == 0.0);

  Surface k = koranyi_sphere(32);
  auto ks = sample_surface(k);
  r = integration_by_parts_residual(g, ks.nodes, ks.boundary, {parse("x2 + x3", 3), parse("x1^2 - 0.5", 3)});
  CHECK(r.boundary == 0.0);
  CHECK(r.residual < 1e-3);

  // paraboloid graph with boundary and a non-tangent field
  SurfaceSpec ps;
  ps.expr = parse("0.4*(x1^2 + x2^2)", 3);
  ps.vertical = 2;
  ps.region = SurfaceSpec::Region::annulus;
  ps.r_inner = 0.3;
  ps.r_outer = 1.0;
  ps.grid = {64, 128};
  Surface pb(g, ps);
  auto pbs = sample_surface(pb);
  r = integration_by_parts_residual(g, pbs.nodes, pbs.boundary, {parse("x1*x3", 3), parse("1 + x2", 3)});
  CHECK(r.residual < 1e-3);
}

TEST_CASE("assembly structure") {
  Surface p = plane_ball(16, 1.0);
  DiscreteOperator op = assemble(p, BoundaryCondition::neumann);
  SpMat diff = op.K - SpMat(op.K.transpose());
  CHECK(diff.norm() == 0.0);
  CHECK((op.K * Vec::Ones(op.size())).norm() < 1e-10 * op.K.norm());
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int k = 0; k < 10; ++k) {
    Vec v(op.size());
    for (int i = 0; i < op.size(); ++i) v[i] = U(rng);
    CHECK(v.dot(op.K * v) >= 0.0);
    CHECK(v.dot(op.M * v) > 0.0);
  }
  Vec rows = op.M * Vec::Ones(op.size());
  CHECK(rows.minCoeff() > 0.0);
  CHECK(Vec::Ones(op.size()).dot(rows) == doctest::Approx(0.874019).epsilon(0.01));

  Surface k = koranyi_sphere(8);
  DiscreteOperator ck = assemble(k, BoundaryCondition::closed);
  CHECK((ck.K - SpMat(ck.K.transpose())).norm() == 0.0);
  CHECK_THROWS_AS(assemble(k, BoundaryCondition::dirichlet), Error);
}

TEST_CASE("eigenproblems") {
  Surface k = koranyi_sphere(16);
  EigenResult c = eigensolve(assemble(k, BoundaryCondition::closed), 4);
  CHECK(c.eigenvalues.size() == 4);
  CHECK(c.eigenvalues[0] == 0.0);
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(c.eigenvalues[i] >= c.eigenvalues[i - 1]);
    CHECK(c.residuals[i] < 1e-8);
  }
  CHECK(c.eigenvalues[1] > 0.0);

  Surface p = plane_ball(24, 1.0);
  DiscreteOperator op = assemble(p, BoundaryCondition::dirichlet);
  EigenResult d = eigensolve(op, 3);
  CHECK(d.eigenvalues[0] > 0.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 5; ++t) {
    Vec v(op.size());
    for (int i = 0; i < op.size(); ++i) v[i] = U(rng);
    CHECK(v.dot(op.K * v) / v.dot(op.M * v) >= d.eigenvalues[0] * (1 - 1e-10));
  }
  Surface pd = p.with_transform(Transform::dilation(2.0));
  EigenResult dd = eigensolve(assemble(pd, BoundaryCondition::dirichlet), 1);
  CHECK(dd.eigenvalues[0] == doctest::Approx(d.eigenvalues[0] / 4).epsilon(0.02));
  // larger ball, smaller first eigenvalue
  EigenResult big = eigensolve(assemble(plane_ball(24, 1.3), BoundaryCondition::dirichlet), 1);
  CHECK(big.eigenvalues[0] <= d.eigenvalues[0] * 1.01);
}

TEST_CASE("weak and strong forms agree") {
  CarnotGroup g = heisenberg(1);
  Surface k = koranyi_sphere(64);
  auto ks = sample_surface(k);
  Expr phi = parse("x1 + x1*x2^2 + x3*x2", 3), psi = parse("1 + x1 - x2*x3", 3);
  auto l = lhs_apply_strong(g, ks.nodes, phi);
  auto gp = grad_hs(g, ks.nodes, phi), gq = grad_hs(g, ks.nodes, psi);
  CompiledExpr pc(psi, 3, 0);
  std::vector<double> a(ks.nodes.size(), 0.0), b(ks.nodes.size(), 0.0);
  for (std::size_t i = 0; i < ks.nodes.size(); ++i) {
    const auto& s = ks.nodes[i];
    if (s.characteristic) continue;
    a[i] = -pc.value(s.x) * l[i] * s.weight * s.J_H;
    b[i] = gp[i].dot(gq[i]) * s.weight * s.J_H;
  }
  double A = pairwise_sum(a), B = pairwise_sum(b);
  CHECK(std::abs(A) > 0.1);
  CHECK(std::abs(A - B) / (std::abs(A) + std::abs(B)) < 1e-3);
}
