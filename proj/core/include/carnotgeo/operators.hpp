#pragma once

#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "carnotgeo/surface.hpp"

namespace carnot {

using SpMat = Eigen::SparseMatrix<double>;

// ---------------------------------------------------------------- pointwise tangential calculus

// grad_HS of an ambient function at a node, horizontal frame components
Vec grad_hs(const CarnotGroup& g, const GeoSample& node, const CompiledExpr& psi);

// D_HS X for a horizontal field X = sum_j X^j X_j given by h component expressions
double dhs_apply(const CarnotGroup& g, const GeoSample& node, const std::vector<CompiledExpr>& X);

// L_HS phi = Delta_HS phi + <C_H nu_H, grad_HS phi>; phi compiled with order 2
double lhs_apply_strong(const CarnotGroup& g, const GeoSample& node, const CompiledExpr& phi);

// Nodal versions. Characteristic nodes carry no sigma_H mass and hold 0 (or an
// empty vector for gradients).
std::vector<Vec> grad_hs(const CarnotGroup& g, const std::vector<GeoSample>& nodes, const Expr& psi);
std::vector<double> dhs_apply(const CarnotGroup& g, const std::vector<GeoSample>& nodes, const ExprVec& X);
std::vector<double> lhs_apply_strong(const CarnotGroup& g, const std::vector<GeoSample>& nodes, const Expr& phi);

struct PartsResidual {
  double lhs = 0.0;       // integral of D_HS X
  double interior = 0.0;  // -integral of H_H <X, nu_H>
  double boundary = 0.0;  // boundary pairing with eta_HS
  double residual = 0.0;  // |lhs - rhs| / (|lhs| + |rhs| + 1)
};

PartsResidual integration_by_parts_residual(const CarnotGroup& g, const std::vector<GeoSample>& nodes,
                                            const std::vector<BoundarySample>& boundary, const ExprVec& X);

// ---------------------------------------------------------------- finite elements

enum class BoundaryCondition { closed, dirichlet, neumann };
std::string to_string(BoundaryCondition bc);
BoundaryCondition parse_boundary_condition(const std::string& s);

struct DiscreteOperator {
  SpMat K, M;  // active DOFs only
  BoundaryCondition bc = BoundaryCondition::dirichlet;
  ParamDomain domain;
  std::vector<int> vertex_counts;
  std::vector<int> vertex_dof;  // canonical DOF of each lexicographic vertex
  std::vector<int> dof_active;  // active index per canonical DOF, -1 when removed
  std::vector<int> active_dof;  // canonical DOF per active index
  int n_dofs = 0;               // canonical DOFs before elimination
  std::vector<GeoSample> qp;    // element-major Gauss samples

  int size() const { return static_cast<int>(active_dof.size()); }
  // expand an active vector to canonical DOFs (removed DOFs are 0)
  Vec expand(const Vec& active) const;
  // values of an active vector at every vertex of the parameter grid
  Vec vertex_values(const Vec& active) const;
  // active vector holding the given per-vertex values (the first vertex of each DOF wins)
  Vec from_vertex_values(const Vec& per_vertex) const;
};

DiscreteOperator assemble(const Surface& s, BoundaryCondition bc, double eps_char = 1e-8);

// FE function at the quadrature points of an operator
struct QPField {
  std::vector<double> value;
  std::vector<Vec> grad;  // grad_HS, horizontal frame components
};

QPField interpolate(const DiscreteOperator& op, const Vec& active);
// integral of f(value, grad) against sigma_H over the quadrature points
double integrate_qp(const DiscreteOperator& op, const QPField& f,
                    const std::function<double(double, const Vec&)>& integrand);

struct EigenResult {
  std::string problem;
  std::vector<double> eigenvalues;
  std::vector<Vec> eigenvectors;  // active DOFs, M-normalized
  std::vector<double> residuals;  // |Kv - lambda Mv| / |Mv|
  int iterations = 0;
};

EigenResult eigensolve(const DiscreteOperator& op, int count, double tol = 1e-8, int max_iter = 500);

}  // namespace carnot
