#pragma once

#include <vector>

#include "carnotgeo/surface.hpp"

namespace carnot {

// parameter point of every grid vertex, lexicographic with axis 0 slowest
std::vector<Vec> vertex_params(const ParamDomain& dom);
// ambient function evaluated at the surface point over every vertex
Vec vertex_values(const Surface& s, const Expr& f);

struct LevelSegment {
  Vec q0, q1;  // parameter endpoints
};

// Marching triangles on the 2D parameter grid: each cell is split along its
// (0,0)-(1,1) diagonal and the piecewise-linear interpolant is cut at `level`.
std::vector<LevelSegment> level_segments(const ParamDomain& dom, const Vec& vertex_vals, double level);

struct SliceMeasure {
  double measure_H = 0.0;  // sigma^{n-2}_H of the level curve
  double length_R = 0.0;   // Riemannian length
  std::size_t segments = 0;
  std::vector<Vec> points;  // surface points at segment midpoints
};

// weight |P_H nu| |P_HS eta| |T dq| at each segment midpoint
SliceMeasure slice_measure(const Surface& s, const std::vector<LevelSegment>& segs, double eps_char = 1e-8);
SliceMeasure slice_measure(const Surface& s, const Vec& vertex_vals, double level, double eps_char = 1e-8);

}  // namespace carnot
