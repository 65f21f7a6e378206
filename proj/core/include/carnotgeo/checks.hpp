#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "carnotgeo/operators.hpp"
#include "carnotgeo/slicer.hpp"

namespace carnot {

struct TracePoint {
  std::string grid;  // e.g. "64x128"
  double value = 0.0;
};

struct PlotSeries {
  std::string name;
  std::vector<std::array<double, 2>> points;
};

// Identity checks carry a residual (pass when |residual| <= tolerance);
// inequality checks carry a margin normalized by the dominant side (pass when
// margin >= -tolerance); estimates pass when a finite value was produced.
enum class CheckKind { identity, inequality, estimate };
std::string to_string(CheckKind k);

struct CheckReport {
  std::string name;
  std::string digest;
  std::vector<std::pair<std::string, double>> quantities;
  CheckKind kind = CheckKind::identity;
  double value = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::vector<TracePoint> trace;
  std::vector<std::string> notes;
  std::vector<PlotSeries> series;

  void put(const std::string& key, double v);
  double get(const std::string& key) const;
  bool has(const std::string& key) const;
  void decide();
};

struct CheckOptions {
  double eps_char = 1e-8;
  std::optional<double> tolerance;  // replaces the per-check default
  bool refine = true;               // also evaluate at half resolution
  std::uint64_t seed = 0x5eed;
  HomNormSpec norm = HomNormSpec::koranyi();
  double unc_cap = 1e6;  // largest admissible sup |varpi| on a UNC domain
};

std::string grid_label(const std::vector<int>& grid);
std::string surface_digest(const Surface& s, double eps_char);
// grid with every entry halved (at least 2)
std::vector<int> half_grid(const std::vector<int>& grid);

// Points, radii and functions passed to the checks below are expressed in the
// base coordinates of the surface; they are carried through the surface's
// transform internally so that transformed copies test the same configuration.

CheckReport check_div_identities(const Surface& s, const CheckOptions& o = {}, int random_points = 1000);
CheckReport check_minkowski(const Surface& s, const CheckOptions& o = {});
CheckReport check_coarea(const Surface& s, const Expr& phi, int slices = 200, const CheckOptions& o = {});
CheckReport check_linear_isoperimetric(const Surface& s, const CheckOptions& o = {});
CheckReport check_monotonicity(const Surface& s, const Vec& center, const std::vector<double>& radii,
                               const CheckOptions& o = {});
// cylinders about the vertical line through `center`, radii in the projection plane
CheckReport check_heinz(const Surface& s, const Vec& center, const std::vector<double>& radii,
                        const CheckOptions& o = {});
CheckReport check_dxi_lemma(const Surface& s, const CheckOptions& o = {});

struct PlateauCandidate {
  enum class Kind { distance_plateau, boundary_plateau, eigenfunction_sweep } kind = Kind::distance_plateau;
  double eps = 0.1;
  Expr cut;            // the cut N is {cut = level}; the base set S_1 is {cut < level}
  double level = 0.0;
};
std::string to_string(PlateauCandidate::Kind k);

CheckReport estimate_isop(const Surface& s, const std::vector<PlateauCandidate>& candidates,
                          const CheckOptions& o = {});
CheckReport check_cheeger_chain(const Surface& s, const CheckOptions& o = {});
CheckReport check_chavel(const Surface& s, const CheckOptions& o = {});
CheckReport check_reilly(const Surface& s, const CheckOptions& o = {});

// radius: when absent, the largest admissible radius min{dist(x, dU), R_U}
CheckReport check_poincare(const Surface& s, const Vec& center, std::optional<double> radius,
                           const std::vector<int>& powers, int bumps, const CheckOptions& o = {});
CheckReport check_poincare_char(const Surface& s, const Vec& center, const std::vector<double>& eps_list,
                                const std::vector<int>& powers, int bumps, const CheckOptions& o = {});
// phi0: when absent, the sigma_H mean of phi over S_R
CheckReport check_caccioppoli(const Surface& s, const Vec& center, double radius, const Expr& phi,
                              std::optional<double> phi0, const CheckOptions& o = {});
CheckReport check_norm_properties(const CarnotGroup& g, const HomNormSpec& norm, int samples,
                                  const CheckOptions& o = {});

// C^1 bumps (rho_c^{2K} below r^{2K})^2 times a random linear factor, supported
// in B(center, radius); deterministic in the seed
std::vector<Expr> random_bumps(const CarnotGroup& g, const HomNormSpec& norm, const Vec& center, double radius,
                               int count, std::uint64_t seed);
// random polynomial of total degree <= degree in the n coordinates
Expr random_polynomial(int n, int degree, std::uint64_t seed);

// sigma_H-weighted median of values (minimizer of the weighted L1 deviation)
double weighted_median(std::vector<std::pair<double, double>> value_weight);

}  // namespace carnot
