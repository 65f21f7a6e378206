#include "carnotgeo/operators.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "carnotgeo/parallel.hpp"

namespace carnot {

namespace {

void require_regular(const GeoSample& node) {
  if (node.characteristic) throw Error(ErrorCode::CharacteristicPoint, "tangential operator at a characteristic node");
}

Mat hs_projector(const GeoSample& node) {
  const int h = static_cast<int>(node.nu_h.size());
  return Mat::Identity(h, h) - node.nu_h * node.nu_h.transpose();
}

std::vector<CompiledExpr> compile_all(const ExprVec& X, int n, int order) {
  std::vector<CompiledExpr> out;
  out.reserve(X.size());
  for (const Expr& e : X) out.emplace_back(e, n, order);
  return out;
}

Vec horizontal_values(const std::vector<CompiledExpr>& X, const Vec& x) {
  Vec v(X.size());
  for (std::size_t j = 0; j < X.size(); ++j) v[j] = X[j].value(x);
  return v;
}

}  // namespace

Vec grad_hs(const CarnotGroup& g, const GeoSample& node, const CompiledExpr& psi) {
  require_regular(node);
  JetValue j = psi.jet(node.x);
  Vec gh = (g.frame(node.x).transpose() * j.grad).head(g.h());
  return gh - gh.dot(node.nu_h) * node.nu_h;
}

double dhs_apply(const CarnotGroup& g, const GeoSample& node, const std::vector<CompiledExpr>& X) {
  require_regular(node);
  const int h = g.h();
  if (static_cast<int>(X.size()) != h) throw Error(ErrorCode::InvalidInput, "horizontal field needs h components");
  Mat AH = g.frame(node.x).leftCols(h);
  Mat P = hs_projector(node);
  Vec Xv(h);
  double div = 0.0;
  for (int j = 0; j < h; ++j) {
    JetValue jj = X[j].jet(node.x);
    Xv[j] = jj.value;
    Vec d = AH.transpose() * jj.grad;  // X_i X^j
    div += P.col(j).dot(d);
  }
  return div + node.c_h_nu_h.dot(Xv);
}

double lhs_apply_strong(const CarnotGroup& g, const GeoSample& node, const CompiledExpr& phi) {
  require_regular(node);
  const int h = g.h();
  JetValue j = phi.jet(node.x);
  FrameJet fj = frame_jet(g.frame(node.x), g.frame_derivatives(node.x), j, h);
  Vec gh = fj.X.head(h);
  Mat P = hs_projector(node);
  double lap = (P.array() * fj.XX.array()).sum() + node.H * gh.dot(node.nu_h);
  return lap + node.c_h_nu_h.dot(P * gh);
}

std::vector<Vec> grad_hs(const CarnotGroup& g, const std::vector<GeoSample>& nodes, const Expr& psi) {
  CompiledExpr c(psi, g.n(), 1);
  std::vector<Vec> out(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t i) {
    if (!nodes[i].characteristic) out[i] = grad_hs(g, nodes[i], c);
  });
  return out;
}

std::vector<double> dhs_apply(const CarnotGroup& g, const std::vector<GeoSample>& nodes, const ExprVec& X) {
  auto c = compile_all(X, g.n(), 1);
  std::vector<double> out(nodes.size(), 0.0);
  parallel_for(nodes.size(), [&](std::size_t i) {
    if (!nodes[i].characteristic) out[i] = dhs_apply(g, nodes[i], c);
  });
  return out;
}

std::vector<double> lhs_apply_strong(const CarnotGroup& g, const std::vector<GeoSample>& nodes, const Expr& phi) {
  CompiledExpr c(phi, g.n(), 2);
  std::vector<double> out(nodes.size(), 0.0);
  parallel_for(nodes.size(), [&](std::size_t i) {
    if (!nodes[i].characteristic) out[i] = lhs_apply_strong(g, nodes[i], c);
  });
  return out;
}

PartsResidual integration_by_parts_residual(const CarnotGroup& g, const std::vector<GeoSample>& nodes,
                                            const std::vector<BoundarySample>& boundary, const ExprVec& X) {
  auto c = compile_all(X, g.n(), 1);
  std::vector<double> d = dhs_apply(g, nodes, X);
  std::vector<double> lv(nodes.size(), 0.0), iv(nodes.size(), 0.0);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const GeoSample& s = nodes[i];
    if (s.characteristic) continue;
    double m = s.weight * s.J_H;
    lv[i] = d[i] * m;
    iv[i] = -s.H * horizontal_values(c, s.x).dot(s.nu_h) * m;
  }
  PartsResidual r;
  r.lhs = pairwise_sum(lv);
  r.interior = pairwise_sum(iv);
  r.boundary = boundary_pairing(boundary, [&](const BoundarySample& b) { return horizontal_values(c, b.x); });
  double rhs = r.interior + r.boundary;
  r.residual = std::abs(r.lhs - rhs) / (std::abs(r.lhs) + std::abs(rhs) + 1.0);
  return r;
}

// ---------------------------------------------------------------- assembly

std::string to_string(BoundaryCondition bc) {
  switch (bc) {
    case BoundaryCondition::closed:
      return "closed";
    case BoundaryCondition::dirichlet:
      return "dirichlet";
    case BoundaryCondition::neumann:
      return "neumann";
  }
  return "?";
}

BoundaryCondition parse_boundary_condition(const std::string& s) {
  if (s == "closed") return BoundaryCondition::closed;
  if (s == "dirichlet") return BoundaryCondition::dirichlet;
  if (s == "neumann") return BoundaryCondition::neumann;
  throw Error(ErrorCode::InvalidInput, "unknown problem '" + s + "' (closed, dirichlet, neumann)");
}

Vec DiscreteOperator::expand(const Vec& active) const {
  Vec full = Vec::Zero(n_dofs);
  for (int a = 0; a < size(); ++a) full[active_dof[a]] = active[a];
  return full;
}

Vec DiscreteOperator::vertex_values(const Vec& active) const {
  Vec full = expand(active);
  Vec out(vertex_dof.size());
  for (std::size_t v = 0; v < vertex_dof.size(); ++v) out[v] = full[vertex_dof[v]];
  return out;
}

Vec DiscreteOperator::from_vertex_values(const Vec& per_vertex) const {
  if (per_vertex.size() != static_cast<Eigen::Index>(vertex_dof.size()))
    throw Error(ErrorCode::InvalidInput, "vertex value count does not match the grid");
  Vec full = Vec::Constant(n_dofs, std::nan(""));
  for (std::size_t v = 0; v < vertex_dof.size(); ++v)
    if (std::isnan(full[vertex_dof[v]])) full[vertex_dof[v]] = per_vertex[v];
  Vec out(size());
  for (int a = 0; a < size(); ++a) out[a] = full[active_dof[a]];
  return out;
}

namespace {

struct ElementLayout {
  int d = 0, L = 0;
  std::vector<int> cells;
  std::vector<int> vcount;
  std::vector<int> elem_dofs;  // cells x L canonical DOFs
  std::vector<double> phi;     // L (qp) x L (vertex)
  std::vector<Vec> dphi;       // parameter gradients, qp-major, before dividing by widths
};

ElementLayout layout(const ParamDomain& dom, std::vector<int>& vertex_dof, int& n_dofs,
                     std::vector<char>& on_boundary) {
  ElementLayout E;
  E.d = dom.dim();
  E.L = 1 << E.d;
  E.vcount = dom.vertex_counts();
  for (const auto& ax : dom.axes) E.cells.push_back(ax.cells);
  std::size_t nv = 1;
  for (int c : E.vcount) nv *= static_cast<std::size_t>(c);

  auto lex = [&](const std::vector<int>& idx) {
    std::size_t k = 0;
    for (int a = 0; a < E.d; ++a) k = k * E.vcount[a] + idx[a];
    return k;
  };
  std::vector<std::size_t> canon(nv);
  std::vector<char> bnd(nv, 0);
  std::vector<int> idx(E.d);
  for (std::size_t v = 0; v < nv; ++v) {
    std::size_t rem = v;
    for (int a = E.d - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(rem % E.vcount[a]);
      rem /= E.vcount[a];
    }
    for (int a = 0; a < E.d; ++a)
      if ((idx[a] == 0 && dom.boundary[a][0]) || (idx[a] == E.cells[a] && dom.boundary[a][1])) bnd[v] = 1;
    for (int a = 0; a < E.d; ++a) {
      if (dom.axes[a].periodic && idx[a] == E.cells[a]) idx[a] = 0;
      if ((idx[a] == 0 && dom.collapses[a][0]) || (idx[a] == E.cells[a] && dom.collapses[a][1])) {
        for (int b = a + 1; b < E.d; ++b) idx[b] = 0;
        break;
      }
    }
    canon[v] = lex(idx);
  }
  std::vector<int> number(nv, -1);
  for (std::size_t v = 0; v < nv; ++v) number[canon[v]] = 0;
  n_dofs = 0;
  for (std::size_t v = 0; v < nv; ++v)
    if (number[v] == 0) number[v] = n_dofs++;
  vertex_dof.resize(nv);
  on_boundary.assign(n_dofs, 0);
  for (std::size_t v = 0; v < nv; ++v) {
    vertex_dof[v] = number[canon[v]];
    if (bnd[v]) on_boundary[vertex_dof[v]] = 1;
  }

  std::size_t ncell = dom.cell_count();
  E.elem_dofs.resize(ncell * E.L);
  std::vector<int> cidx(E.d), vidx(E.d);
  for (std::size_t c = 0; c < ncell; ++c) {
    std::size_t rem = c;
    for (int a = E.d - 1; a >= 0; --a) {
      cidx[a] = static_cast<int>(rem % E.cells[a]);
      rem /= E.cells[a];
    }
    for (int l = 0; l < E.L; ++l) {
      for (int a = 0; a < E.d; ++a) vidx[a] = cidx[a] + ((l >> (E.d - 1 - a)) & 1);
      E.elem_dofs[c * E.L + l] = vertex_dof[lex(vidx)];
    }
  }

  const double g0 = 0.5 - 0.5 / std::sqrt(3.0), g1 = 0.5 + 0.5 / std::sqrt(3.0);
  E.phi.assign(E.L * E.L, 1.0);
  E.dphi.assign(E.L * E.L, Vec::Ones(E.d));
  for (int q = 0; q < E.L; ++q)
    for (int l = 0; l < E.L; ++l) {
      double& p = E.phi[q * E.L + l];
      Vec& dp = E.dphi[q * E.L + l];
      for (int a = 0; a < E.d; ++a) {
        double t = ((q >> (E.d - 1 - a)) & 1) ? g1 : g0;
        bool up = (l >> (E.d - 1 - a)) & 1;
        double f = up ? t : 1.0 - t, df = up ? 1.0 : -1.0;
        for (int b = 0; b < E.d; ++b) dp[b] *= b == a ? df : f;
        p *= f;
      }
    }
  for (int q = 0; q < E.L * E.L; ++q)
    for (int a = 0; a < E.d; ++a) E.dphi[q][a] /= dom.axes[a].width();
  return E;
}

}  // namespace

DiscreteOperator assemble(const Surface& s, BoundaryCondition bc, double eps_char) {
  DiscreteOperator op;
  op.bc = bc;
  op.domain = s.domain();
  const ParamDomain& dom = op.domain;
  bool has_boundary = false;
  for (const auto& b : dom.boundary) has_boundary |= b[0] || b[1];
  if (bc == BoundaryCondition::closed && has_boundary)
    throw Error(ErrorCode::NotClosedSurface, "closed problem on a surface with boundary");
  if (bc == BoundaryCondition::dirichlet && !has_boundary)
    throw Error(ErrorCode::InvalidInput, "dirichlet problem on a surface without boundary");

  std::vector<char> on_boundary;
  ElementLayout E = layout(dom, op.vertex_dof, op.n_dofs, on_boundary);
  op.vertex_counts = E.vcount;

  std::vector<Vec> q;
  std::vector<double> w;
  quadrature_nodes(dom, QuadRule::gauss2, q, w);
  op.qp = sample_points(s, q, w, eps_char);

  // sparsity pattern from element connectivity
  const std::size_t ncell = dom.cell_count();
  const int L = E.L;
  std::vector<std::vector<int>> cols(op.n_dofs);
  for (std::size_t c = 0; c < ncell; ++c)
    for (int l = 0; l < L; ++l)
      for (int m = 0; m < L; ++m) {
        int i = E.elem_dofs[c * L + l], j = E.elem_dofs[c * L + m];
        if (i <= j) cols[j].push_back(i);
      }
  std::vector<Eigen::Triplet<double>> pattern;
  for (int j = 0; j < op.n_dofs; ++j) {
    auto& cj = cols[j];
    std::sort(cj.begin(), cj.end());
    cj.erase(std::unique(cj.begin(), cj.end()), cj.end());
    for (int i : cj) pattern.emplace_back(i, j, 0.0);
    std::vector<int>().swap(cj);
  }
  SpMat K(op.n_dofs, op.n_dofs), M(op.n_dofs, op.n_dofs);
  K.setFromTriplets(pattern.begin(), pattern.end());
  K.makeCompressed();
  M = K;

  // local matrices in parallel blocks, accumulated serially in element order into
  // the upper triangle; mirroring afterwards makes K and M exactly symmetric even
  // when collapsed vertices share a DOF
  const std::size_t block = 4096;
  std::vector<double> Kl, Ml;
  for (std::size_t c0 = 0; c0 < ncell; c0 += block) {
    std::size_t nb = std::min(block, ncell - c0);
    Kl.assign(nb * L * L, 0.0);
    Ml.assign(nb * L * L, 0.0);
    parallel_for(nb, [&](std::size_t e) {
      std::size_t c = c0 + e;
      double* kl = &Kl[e * L * L];
      double* ml = &Ml[e * L * L];
      std::vector<Vec> gr(L);
      for (int qi = 0; qi < L; ++qi) {
        const GeoSample& g = op.qp[c * L + qi];
        if (g.characteristic || !(g.J_H > 0.0)) continue;
        double m = g.weight * g.J_H;
        for (int l = 0; l < L; ++l) gr[l] = g.P * E.dphi[qi * L + l];
        for (int l = 0; l < L; ++l)
          for (int k = l; k < L; ++k) {
            kl[l * L + k] += m * gr[l].dot(gr[k]);
            ml[l * L + k] += m * E.phi[qi * L + l] * E.phi[qi * L + k];
          }
      }
      for (int l = 0; l < L; ++l)
        for (int k = 0; k < l; ++k) {
          kl[l * L + k] = kl[k * L + l];
          ml[l * L + k] = ml[k * L + l];
        }
    });
    for (std::size_t e = 0; e < nb; ++e) {
      const int* dofs = &E.elem_dofs[(c0 + e) * L];
      for (int l = 0; l < L; ++l)
        for (int k = 0; k < L; ++k) {
          if (dofs[l] > dofs[k]) continue;
          K.coeffRef(dofs[l], dofs[k]) += Kl[e * L * L + l * L + k];
          M.coeffRef(dofs[l], dofs[k]) += Ml[e * L * L + l * L + k];
        }
    }
  }
  K = SpMat(K.selfadjointView<Eigen::Upper>());
  M = SpMat(M.selfadjointView<Eigen::Upper>());

  double max_mass = 0.0;
  for (int i = 0; i < op.n_dofs; ++i) max_mass = std::max(max_mass, M.coeff(i, i));
  op.dof_active.assign(op.n_dofs, -1);
  for (int i = 0; i < op.n_dofs; ++i) {
    if (bc == BoundaryCondition::dirichlet && on_boundary[i]) continue;
    if (!(M.coeff(i, i) > 1e-14 * max_mass)) continue;
    op.dof_active[i] = static_cast<int>(op.active_dof.size());
    op.active_dof.push_back(i);
  }
  if (op.active_dof.empty()) throw Error(ErrorCode::EmptyActiveSet, "no active degrees of freedom");

  auto restrict_to_active = [&](const SpMat& A) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(A.nonZeros());
    for (int j = 0; j < A.outerSize(); ++j) {
      int aj = op.dof_active[j];
      if (aj < 0) continue;
      for (SpMat::InnerIterator it(A, j); it; ++it) {
        int ai = op.dof_active[it.row()];
        if (ai >= 0) t.emplace_back(ai, aj, it.value());
      }
    }
    SpMat R(op.size(), op.size());
    R.setFromTriplets(t.begin(), t.end());
    R.makeCompressed();
    return R;
  };
  op.K = restrict_to_active(K);
  op.M = restrict_to_active(M);
  return op;
}

QPField interpolate(const DiscreteOperator& op, const Vec& active) {
  std::vector<int> vd;
  int nd = 0;
  std::vector<char> bnd;
  ElementLayout E = layout(op.domain, vd, nd, bnd);
  Vec full = op.expand(active);
  const int L = E.L;
  QPField f;
  f.value.assign(op.qp.size(), 0.0);
  f.grad.assign(op.qp.size(), Vec());
  parallel_for(op.qp.size(), [&](std::size_t i) {
    std::size_t c = i / L;
    int qi = static_cast<int>(i % L);
    const int* dofs = &E.elem_dofs[c * L];
    double v = 0.0;
    Vec dq = Vec::Zero(E.d);
    for (int l = 0; l < L; ++l) {
      v += E.phi[qi * L + l] * full[dofs[l]];
      dq += E.dphi[qi * L + l] * full[dofs[l]];
    }
    f.value[i] = v;
    f.grad[i] = op.qp[i].P * dq;
  });
  return f;
}

double integrate_qp(const DiscreteOperator& op, const QPField& f,
                    const std::function<double(double, const Vec&)>& integrand) {
  std::vector<double> v(op.qp.size(), 0.0);
  for (std::size_t i = 0; i < op.qp.size(); ++i) {
    const GeoSample& g = op.qp[i];
    if (g.characteristic || !(g.J_H > 0.0)) continue;
    v[i] = g.weight * g.J_H * integrand(f.value[i], f.grad[i]);
  }
  return pairwise_sum(v);
}

// ---------------------------------------------------------------- eigensolver

namespace {

double unit_from_bits(std::uint64_t b) { return static_cast<double>(b >> 11) * 0x1.0p-53; }

}  // namespace

EigenResult eigensolve(const DiscreteOperator& op, int count, double tol, int max_iter) {
  if (count < 1) throw Error(ErrorCode::InvalidInput, "eigen count must be >= 1");
  const int n = op.size();
  const bool deflate = op.bc != BoundaryCondition::dirichlet;
  const int want = deflate ? count - 1 : count;
  const int avail = deflate ? n - 1 : n;
  if (want > avail) throw Error(ErrorCode::InvalidInput, "more eigenpairs requested than degrees of freedom");

  EigenResult res;
  res.problem = to_string(op.bc);
  Vec ones = Vec::Ones(n);
  Vec Mones = op.M * ones;
  double cMc = ones.dot(Mones);
  if (deflate) {
    Vec c = ones / std::sqrt(cMc);
    res.eigenvalues.push_back(0.0);
    res.eigenvectors.push_back(c);
    Vec Mc = op.M * c;
    res.residuals.push_back((op.K * c).norm() / Mc.norm());
  }
  if (want == 0) return res;

  const int p = std::min(avail, std::max(2 * want, want + 8));
  double trK = 0.0, trM = 0.0;
  for (int i = 0; i < n; ++i) {
    trK += op.K.coeff(i, i);
    trM += op.M.coeff(i, i);
  }
  double sigma = deflate ? 1e-6 * trK / trM : 0.0;
  Eigen::SimplicialLDLT<SpMat> ldlt;
  ldlt.compute(op.K + sigma * op.M);
  if (ldlt.info() != Eigen::Success && !deflate) {
    sigma = 1e-6 * trK / trM;
    ldlt.compute(op.K + sigma * op.M);
  }
  if (ldlt.info() != Eigen::Success)
    throw Error(ErrorCode::SolverFailure, "factorization of the shifted stiffness matrix failed");

  auto deflate_cols = [&](Mat& X) {
    if (!deflate) return;
    for (int k = 0; k < X.cols(); ++k) X.col(k) -= ones * (Mones.dot(X.col(k)) / cMc);
  };

  Mat X(n, p);
  std::mt19937_64 rng(0x5eedULL);
  for (int k = 0; k < p; ++k)
    for (int i = 0; i < n; ++i) X(i, k) = (!deflate && k == 0) ? 1.0 : 2.0 * unit_from_bits(rng()) - 1.0;
  deflate_cols(X);

  std::vector<double> resid(want, 0.0);
  Vec theta;
  for (int it = 1; it <= max_iter; ++it) {
    Mat Y = ldlt.solve(op.M * X);
    deflate_cols(Y);
    Eigen::HouseholderQR<Mat> qr(Y);
    Mat Q = qr.householderQ() * Mat::Identity(n, p);
    Mat KQ = op.K * Q, MQ = op.M * Q;
    Mat Kr = Q.transpose() * KQ, Mr = Q.transpose() * MQ;
    Kr = 0.5 * (Kr + Kr.transpose()).eval();
    Mr = 0.5 * (Mr + Mr.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ges(Kr, Mr);
    if (ges.info() != Eigen::Success) throw Error(ErrorCode::SolverFailure, "Rayleigh-Ritz step failed");
    theta = ges.eigenvalues();
    const Mat& V = ges.eigenvectors();
    X = Q * V;
    Mat KX = KQ * V, MX = MQ * V;
    bool done = true;
    for (int k = 0; k < want; ++k) {
      resid[k] = (KX.col(k) - theta[k] * MX.col(k)).norm() / MX.col(k).norm();
      done &= resid[k] < tol;
    }
    res.iterations = it;
    if (done) {
      for (int k = 0; k < want; ++k) {
        Vec v = X.col(k);
        double s = std::sqrt(v.dot(op.M * v));
        // fix the sign so the largest-magnitude entry is positive
        Eigen::Index imax;
        v.cwiseAbs().maxCoeff(&imax);
        if (v[imax] < 0) s = -s;
        res.eigenvalues.push_back(theta[k]);
        res.eigenvectors.push_back(v / s);
        res.residuals.push_back(resid[k]);
      }
      return res;
    }
  }
  std::ostringstream msg;
  msg << "subspace iteration did not converge in " << max_iter << " iterations; residuals";
  for (double r : resid) msg << ' ' << r;
  throw Error(ErrorCode::SolverFailure, msg.str());
}

}  // namespace carnot
