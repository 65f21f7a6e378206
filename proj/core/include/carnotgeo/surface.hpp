#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "carnotgeo/algebra.hpp"
#include "carnotgeo/expr.hpp"

namespace carnot {

// ---------------------------------------------------------------- symbolic group operations

using ExprVec = std::vector<Expr>;

ExprVec coordinate_exprs(int n);
ExprVec sym_bracket(const CarnotGroup& g, const ExprVec& x, const ExprVec& y);
ExprVec sym_product(const CarnotGroup& g, const ExprVec& x, const ExprVec& y);
ExprVec sym_dilate(const CarnotGroup& g, double t, const ExprVec& x);
ExprVec constant_exprs(const Vec& a);
// frame columns X_i as coordinate expressions
std::vector<ExprVec> sym_frame(const CarnotGroup& g);
// X_i f for every frame index i
ExprVec sym_frame_gradient(const CarnotGroup& g, const Expr& f);
// rho^{2K} as a polynomial expression of the given coordinates
Expr norm_power_expr(const HomNormSpec& spec, const CarnotGroup& g, const ExprVec& x);

// ---------------------------------------------------------------- transforms

// Composition of dilations and left translations, applied in list order.
class Transform {
 public:
  struct Step {
    enum class Kind { dilate, translate } kind;
    double t = 1.0;
    Vec a;
  };

  Transform() = default;
  static Transform dilation(double t);
  static Transform translation(const Vec& a);
  Transform then(const Transform& next) const;

  bool identity() const { return steps_.empty(); }
  const std::vector<Step>& steps() const { return steps_; }
  double scale() const;  // product of dilation factors

  Vec apply(const CarnotGroup& g, const Vec& x) const;
  ExprVec forward_exprs(const CarnotGroup& g) const;
  ExprVec inverse_exprs(const CarnotGroup& g) const;

 private:
  std::vector<Step> steps_;
};

// ---------------------------------------------------------------- parameter domains

struct ParamAxis {
  double lo = 0.0, hi = 1.0;
  int cells = 1;
  bool periodic = false;
  double width() const { return (hi - lo) / cells; }
};

struct ParamDomain {
  std::vector<ParamAxis> axes;
  std::vector<std::array<bool, 2>> boundary;   // true boundary faces per axis (lo, hi)
  std::vector<std::array<bool, 2>> collapses;  // face where all later axes degenerate
  int dim() const { return static_cast<int>(axes.size()); }
  double volume() const;
  std::size_t cell_count() const;
  std::vector<int> vertex_counts() const;  // cells + 1 per axis
};

struct SurfaceSpec {
  enum class Kind { graph, levelset } kind = Kind::graph;
  enum class Region { box, annulus, ball } region = Region::box;

  Expr expr;
  std::string source;  // original expression text when parsed from input

  int vertical = -1;  // graph: 0-based index of the vertical coordinate
  // graph: bounds for the n-1 coordinates other than `vertical`, in order;
  // levelset: bounds for all n coordinates
  std::vector<std::array<double, 2>> box;
  bool closed = false;           // levelset: closed surface through a radial chart
  std::optional<Vec> center;     // radial chart center (defaults to the box center)

  // polar regions over a 2D graph parameter plane
  std::array<double, 2> region_center{0.0, 0.0};
  double r_inner = 0.0, r_outer = 1.0;  // annulus
  double ball_radius = 1.0;             // ball: homogeneous radius about the surface point over region_center
  HomNormSpec ball_norm = HomNormSpec::koranyi();

  std::vector<int> grid;  // cells per parameter axis
  Transform transform;
};

// ---------------------------------------------------------------- pointwise geometry

struct FrameJet {
  Vec X;   // X_i f, all i
  Mat XX;  // X_i X_j f, horizontal block
};

FrameJet frame_jet(const Mat& A, const std::vector<Mat>& dA, const JetValue& f, int h);

struct NormalInfo {
  Vec nu;      // Riemannian unit normal, frame components
  Vec p_h_nu;  // horizontal part
  double p_h_nu_norm = 0.0;
  std::optional<Vec> nu_h;
};

NormalInfo normals_at(const CarnotGroup& g, const Expr& phi, const Vec& x, double eps_char = 1e-8);
double mean_curvature_H(const CarnotGroup& g, const Expr& phi, const Vec& x, double eps_char = 1e-8);

struct GeoSample {
  Vec q;  // domain parameter
  Vec x;  // point
  Vec nu;
  Vec p_h_nu;
  double p_h_nu_norm = 0.0;
  bool characteristic = false;
  Vec nu_h;       // empty when characteristic
  Vec varpi;      // alpha in I_V, offset by h; empty when characteristic
  Vec c_h_nu_h;   // C_H nu_H
  double H = 0.0;  // horizontal mean curvature
  Mat Dnu;        // X_i (nu_H)_k on the ambient extension
  Vec x_h;
  double g_h = 0.0;
  Vec x_hs;
  double J_R = 0.0, J_H = 0.0;
  double weight = 0.0;  // parameter quadrature weight
  Mat P;                // h x d map from parameter gradient to grad_HS
  Mat Tf;               // tangents in frame components, n x d
};

struct BoundarySample {
  Vec q;
  Vec x;
  Vec eta;  // frame components, unit, tangent to S
  Vec p_hs_eta;
  double p_hs_eta_norm = 0.0;
  double p_h_nu_norm = 0.0;
  double J_R = 0.0;     // boundary area factor
  double weight = 0.0;  // parameter weight along the face
  double h_weight = 0.0;  // |P_H nu| |P_HS eta| J_R weight
  Vec pairing;          // P_HS eta |P_H nu| J_R weight
  int axis = 0, side = 0;
};

class Chart;

class Surface {
 public:
  Surface(const CarnotGroup& g, SurfaceSpec spec);
  ~Surface();
  Surface(const Surface&);
  Surface& operator=(const Surface&);

  const CarnotGroup& group() const { return g_; }
  const SurfaceSpec& spec() const { return spec_; }
  const ParamDomain& domain() const;
  int n() const { return g_.n(); }
  int dim() const { return g_.n() - 1; }
  bool closed() const;
  bool is_graph() const { return spec_.kind == SurfaceSpec::Kind::graph; }

  Surface with_grid(const std::vector<int>& cells) const;
  Surface with_transform(const Transform& t) const;

  // base (untransformed) parametrization
  void base_map(const Vec& q, Vec& u, Mat& T) const;
  // transformed point and coordinate tangents (n x d)
  void map(const Vec& q, Vec& u, Mat& T) const;
  Vec point(const Vec& q) const;

  const Expr& defining() const { return F_; }
  const CompiledExpr& defining_jet() const { return Fc_; }
  // function given in base coordinates, carried to the transformed surface
  Expr carry(const Expr& base) const;
  Vec carry_point(const Vec& base) const { return spec_.transform.apply(g_, base); }

  GeoSample sample_at(const Vec& q, double weight, double eps_char) const;
  BoundarySample boundary_at(const Vec& q, int axis, int side, double weight, double eps_char) const;

 private:
  CarnotGroup g_;
  SurfaceSpec spec_;
  std::shared_ptr<const Chart> chart_;
  Expr F_;
  CompiledExpr Fc_;
  std::vector<CompiledExpr> fwd_;  // transform components, order 1
};

struct SurfaceSampling {
  std::vector<GeoSample> nodes;
  std::vector<BoundarySample> boundary;
  double eps_char = 1e-8;
  int n_characteristic = 0;
  double characteristic_mass_R = 0.0;  // Riemannian mass of flagged nodes
};

enum class QuadRule { midpoint, gauss2 };

// parameter nodes and weights over the domain
void quadrature_nodes(const ParamDomain& dom, QuadRule rule, std::vector<Vec>& q, std::vector<double>& w);

std::vector<GeoSample> sample_points(const Surface& s, const std::vector<Vec>& q, const std::vector<double>& w,
                                     double eps_char);
SurfaceSampling sample_surface(const Surface& s, double eps_char = 1e-8);
std::vector<BoundarySample> boundary_samples(const Surface& s, double eps_char = 1e-8);

double integrate_H(const std::vector<GeoSample>& nodes, const std::function<double(const GeoSample&)>& f);
double integrate_R(const std::vector<GeoSample>& nodes, const std::function<double(const GeoSample&)>& f);
double h_perimeter(const std::vector<GeoSample>& nodes);
// sum over boundary nodes of <X, P_HS eta>|P_H nu| J_R weight
double boundary_pairing(const std::vector<BoundarySample>& b, const std::function<Vec(const BoundarySample&)>& X);
double boundary_measure_H(const std::vector<BoundarySample>& b,
                          const std::function<bool(const BoundarySample&)>& mask = nullptr);

struct ProjectionMeasure {
  double quadrature = 0.0;  // integral of varpi_alpha over sigma_H
  double lebesgue = 0.0;    // Lebesgue measure of the projected region
  double discrepancy = 0.0;
};

ProjectionMeasure vertical_projection_measure(const Surface& s, const std::vector<GeoSample>& nodes,
                                              const std::function<bool(const GeoSample&)>& region = nullptr);

}  // namespace carnot
