#include "carnotgeo/slicer.hpp"

#include <cmath>

#include "carnotgeo/parallel.hpp"

namespace carnot {

std::vector<Vec> vertex_params(const ParamDomain& dom) {
  const int d = dom.dim();
  std::vector<int> vc = dom.vertex_counts();
  std::size_t nv = 1;
  for (int c : vc) nv *= static_cast<std::size_t>(c);
  std::vector<Vec> out(nv, Vec(d));
  for (std::size_t v = 0; v < nv; ++v) {
    std::size_t rem = v;
    for (int a = d - 1; a >= 0; --a) {
      int i = static_cast<int>(rem % vc[a]);
      rem /= vc[a];
      out[v][a] = dom.axes[a].lo + i * dom.axes[a].width();
    }
  }
  return out;
}

Vec vertex_values(const Surface& s, const Expr& f) {
  CompiledExpr c(f, s.n(), 0);
  std::vector<Vec> q = vertex_params(s.domain());
  Vec out(q.size());
  parallel_for(q.size(), [&](std::size_t i) { out[i] = c.value(s.point(q[i])); });
  return out;
}

std::vector<LevelSegment> level_segments(const ParamDomain& dom, const Vec& vals, double level) {
  if (dom.dim() != 2) throw Error(ErrorCode::DegenerateSlicing, "level-set slicing needs a two-dimensional parameter domain");
  std::vector<int> vc = dom.vertex_counts();
  if (vals.size() != static_cast<Eigen::Index>(vc[0]) * vc[1])
    throw Error(ErrorCode::InvalidInput, "vertex value count does not match the grid");
  const double w0 = dom.axes[0].width(), w1 = dom.axes[1].width();
  auto at = [&](int i, int j) { return vals[static_cast<Eigen::Index>(i) * vc[1] + j]; };
  auto param = [&](int i, int j) {
    Vec q(2);
    q << dom.axes[0].lo + i * w0, dom.axes[1].lo + j * w1;
    return q;
  };
  std::vector<LevelSegment> out;
  for (int i = 0; i + 1 < vc[0]; ++i)
    for (int j = 0; j + 1 < vc[1]; ++j) {
      const int tri[2][3][2] = {{{0, 0}, {1, 0}, {1, 1}}, {{0, 0}, {1, 1}, {0, 1}}};
      for (const auto& t : tri) {
        double f[3];
        Vec p[3];
        for (int k = 0; k < 3; ++k) {
          f[k] = at(i + t[k][0], j + t[k][1]);
          p[k] = param(i + t[k][0], j + t[k][1]);
        }
        std::vector<Vec> cut;
        for (int k = 0; k < 3; ++k) {
          int m = (k + 1) % 3;
          bool ak = f[k] > level, am = f[m] > level;
          if (ak == am) continue;
          double s = (level - f[k]) / (f[m] - f[k]);
          cut.push_back(p[k] + s * (p[m] - p[k]));
        }
        if (cut.size() == 2 && (cut[0] - cut[1]).norm() > 0.0) out.push_back({cut[0], cut[1]});
      }
    }
  return out;
}

SliceMeasure slice_measure(const Surface& s, const std::vector<LevelSegment>& segs, double eps_char) {
  const int h = s.group().h();
  std::vector<double> mh(segs.size(), 0.0), lr(segs.size(), 0.0);
  SliceMeasure out;
  out.segments = segs.size();
  out.points.resize(segs.size());
  parallel_for(segs.size(), [&](std::size_t k) {
    Vec dq = segs[k].q1 - segs[k].q0;
    GeoSample g = s.sample_at(0.5 * (segs[k].q0 + segs[k].q1), 0.0, eps_char);
    out.points[k] = g.x;
    Vec t = g.Tf * dq;
    double len = t.norm();
    lr[k] = len;
    if (g.characteristic || !(len > 0.0)) return;
    Vec perp(2);
    perp << -dq[1], dq[0];
    Vec that = t / len;
    Vec v = g.Tf * perp;
    v -= v.dot(that) * that;
    double vn = v.norm();
    if (!(vn > 0.0)) return;
    Vec eta_h = v.head(h) / vn;
    Vec p_hs = eta_h - eta_h.dot(g.nu_h) * g.nu_h;
    mh[k] = g.p_h_nu_norm * p_hs.norm() * len;
  });
  out.measure_H = pairwise_sum(mh);
  out.length_R = pairwise_sum(lr);
  return out;
}

SliceMeasure slice_measure(const Surface& s, const Vec& vals, double level, double eps_char) {
  return slice_measure(s, level_segments(s.domain(), vals, level), eps_char);
}

}  // namespace carnot
