#include "carnotgeo/algebra.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

namespace carnot {

StrataSignature StrataSignature::from_dims(const std::vector<int>& h) {
  if (h.empty()) throw Error(ErrorCode::InvalidStratification, "empty strata signature");
  StrataSignature s;
  s.h = h;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] < 1)
      throw Error(ErrorCode::InvalidStratification,
                  "stratum " + std::to_string(i + 1) + " has dimension " + std::to_string(h[i]));
    s.n += h[i];
    s.Q += static_cast<int>(i + 1) * h[i];
    for (int l = 0; l < h[i]; ++l) s.ord.push_back(static_cast<int>(i + 1));
  }
  return s;
}

int StrataSignature::stratum_begin(int s) const {
  int b = 0;
  for (int i = 1; i < s; ++i) b += h[i - 1];
  return b;
}

std::string ValidationReport::summary() const {
  if (valid) return "valid";
  std::ostringstream os;
  for (const auto& f : failures) {
    os << f.invariant << " failure at (";
    for (std::size_t k = 0; k < f.indices.size(); ++k) os << (k ? "," : "") << f.indices[k];
    os << ") value " << f.value << "\n";
  }
  return os.str();
}

namespace {

struct DenseBuild {
  std::vector<double> C;
  std::vector<ValidationFailure> skew;
};

DenseBuild build_dense(const StructureTensor& t) {
  const int n = t.signature.n;
  if (t.declared_n >= 0 && t.declared_n != n)
    throw Error(ErrorCode::InvalidStratification, "sum of strata dimensions " + std::to_string(n) +
                                                      " differs from declared n " +
                                                      std::to_string(t.declared_n));
  DenseBuild out;
  out.C.assign(static_cast<std::size_t>(n) * n * n, 0.0);
  std::map<std::tuple<int, int, int>, double> given;
  for (const auto& e : t.entries) {
    if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n || e.r < 0 || e.r >= n)
      throw Error(ErrorCode::IndexOutOfRange, "structure constant (" + std::to_string(e.i + 1) + "," +
                                                  std::to_string(e.j + 1) + "," +
                                                  std::to_string(e.r + 1) + ") outside 1.." +
                                                  std::to_string(n));
    auto key = std::make_tuple(e.i, e.j, e.r);
    auto it = given.find(key);
    if (it != given.end() && it->second != e.value)
      out.skew.push_back({"skew", {e.i + 1, e.j + 1, e.r + 1}, e.value - it->second});
    given[key] = e.value;
  }
  auto at = [&](int r, int i, int j) -> double& { return out.C[(static_cast<std::size_t>(r) * n + i) * n + j]; };
  for (const auto& [key, v] : given) {
    auto [i, j, r] = key;
    if (i == j) {
      if (v != 0.0) out.skew.push_back({"skew", {i + 1, j + 1, r + 1}, v});
      continue;
    }
    auto partner = given.find(std::make_tuple(j, i, r));
    if (partner != given.end()) {
      if (i < j && v + partner->second != 0.0)
        out.skew.push_back({"skew", {i + 1, j + 1, r + 1}, v + partner->second});
      at(r, i, j) = v;
    } else {
      at(r, i, j) = v;
      at(r, j, i) = -v;
    }
  }
  return out;
}

}  // namespace

ValidationReport validate_algebra(const StructureTensor& t, double tol) {
  for (int d : t.signature.h)
    if (d < 1) throw Error(ErrorCode::InvalidStratification, "stratum with dimension < 1");
  ValidationReport rep;
  DenseBuild b = build_dense(t);
  rep.failures = b.skew;
  const auto& sig = t.signature;
  const int n = sig.n;
  auto C = [&](int r, int i, int j) { return b.C[(static_cast<std::size_t>(r) * n + i) * n + j]; };

  for (int r = 0; r < n; ++r)
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (C(r, i, j) != 0.0 && sig.ord[i] + sig.ord[j] != sig.ord[r])
          rep.failures.push_back({"grading", {i + 1, j + 1, r + 1}, C(r, i, j)});

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int r = j + 1; r < n; ++r)
        for (int s = 0; s < n; ++s) {
          double acc = 0.0;
          for (int m = 0; m < n; ++m)
            acc += C(m, i, j) * C(s, m, r) + C(m, j, r) * C(s, m, i) + C(m, r, i) * C(s, m, j);
          if (std::abs(acc) > tol) rep.failures.push_back({"jacobi", {i + 1, j + 1, r + 1, s + 1}, acc});
        }

  for (int s = 2; s <= sig.step(); ++s) {
    int b0 = sig.stratum_begin(s), hs = sig.h[s - 1];
    int p0 = sig.stratum_begin(s - 1), p1 = sig.stratum_end(s - 1);
    Mat span(hs, sig.h[0] * (p1 - p0));
    int col = 0;
    for (int a = 0; a < sig.h[0]; ++a)
      for (int q = p0; q < p1; ++q, ++col)
        for (int r = 0; r < hs; ++r) span(r, col) = C(b0 + r, a, q);
    Eigen::FullPivLU<Mat> lu(span);
    lu.setThreshold(1e-10);
    if (lu.rank() < hs) rep.failures.push_back({"generation", {s}, static_cast<double>(lu.rank())});
  }
  rep.valid = rep.failures.empty();
  return rep;
}

CarnotGroup::CarnotGroup(const StructureTensor& tensor) : tensor_(tensor), sig_(tensor.signature) {
  sig_ = StrataSignature::from_dims(tensor.signature.h);
  tensor_.signature = sig_;
  ValidationReport rep = validate_algebra(tensor_);
  if (!rep.valid) throw Error(ErrorCode::InvalidAlgebra, rep.summary());
  dense_ = build_dense(tensor_).C;
  const int N = n();
  ad_.assign(N, Mat::Zero(N, N));
  for (int m = 0; m < N; ++m)
    for (int r = 0; r < N; ++r)
      for (int i = 0; i < N; ++i) ad_[m](r, i) = C(r, m, i);
  cnorm_ = 0.0;
  if (step() >= 2) {
    for (int a = h(); a < N; ++a) {
      Mat H = hmat(a);
      if (H.norm() == 0.0) continue;
      Eigen::JacobiSVD<Mat> svd(H);
      cnorm_ += svd.singularValues()(0);
    }
  }
}

Mat CarnotGroup::hmat(int alpha) const {
  Mat H(h(), h());
  for (int i = 0; i < h(); ++i)
    for (int j = 0; j < h(); ++j) H(i, j) = C(alpha, i, j);
  return H;
}

void CarnotGroup::require_law() const {
  if (step() > 3)
    throw Error(ErrorCode::UnsupportedStep, "group law and frames need step <= 3, got " + std::to_string(step()));
}

Vec CarnotGroup::bracket(const Vec& x, const Vec& y) const {
  const int N = n();
  Vec z = Vec::Zero(N);
  for (int r = 0; r < N; ++r) {
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
      if (x[i] == 0.0) continue;
      for (int j = 0; j < N; ++j) acc += C(r, i, j) * x[i] * y[j];
    }
    z[r] = acc;
  }
  return z;
}

Vec CarnotGroup::product(const Vec& x, const Vec& y) const {
  require_law();
  Vec xy = bracket(x, y);
  Vec z = x + y + 0.5 * xy;
  if (step() == 3) z += (bracket(x, xy) - bracket(y, xy)) / 12.0;
  return z;
}

Vec CarnotGroup::dilate(double t, const Vec& x) const {
  if (t < 0.0) throw Error(ErrorCode::NegativeDilation, "dilation factor " + std::to_string(t));
  Vec z = x;
  for (int l = 0; l < n(); ++l) z[l] *= std::pow(t, ord(l));
  return z;
}

Mat CarnotGroup::frame(const Vec& x) const {
  require_law();
  const int N = n();
  Mat M = Mat::Zero(N, N);
  for (int j = 0; j < N; ++j)
    if (x[j] != 0.0) M += x[j] * ad_[j];
  Mat A = Mat::Identity(N, N) + 0.5 * M;
  if (step() == 3) A += M * M / 12.0;
  return A;
}

std::vector<Mat> CarnotGroup::frame_derivatives(const Vec& x) const {
  require_law();
  const int N = n();
  std::vector<Mat> out(N);
  Mat M;
  if (step() == 3) {
    M = Mat::Zero(N, N);
    for (int j = 0; j < N; ++j)
      if (x[j] != 0.0) M += x[j] * ad_[j];
  }
  for (int m = 0; m < N; ++m) {
    out[m] = 0.5 * ad_[m];
    if (step() == 3) out[m] += (ad_[m] * M + M * ad_[m]) / 12.0;
  }
  return out;
}

Mat CarnotGroup::frame_inverse(const Vec& x) const {
  Mat A = frame(x);
  return A.triangularView<Eigen::UnitLower>().solve(Mat::Identity(n(), n()));
}

Mat CarnotGroup::metric(const Vec& x) const {
  Mat Ai = frame_inverse(x);
  return Ai.transpose() * Ai;
}

std::vector<CarnotGroup::Christoffel> CarnotGroup::connection() const {
  std::vector<Christoffel> out;
  const int N = n();
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      for (int r = 0; r < N; ++r) {
        double v = 0.5 * (C(r, i, j) - C(i, j, r) + C(j, r, i));
        if (v != 0.0) out.push_back({i, j, r, v});
      }
  return out;
}

double CarnotGroup::div_h_position(const Vec& x) const {
  // X_i x_j = A_{ji}; the horizontal block of A is the identity
  Mat A = frame(x);
  double s = 0.0;
  for (int i = 0; i < h(); ++i) s += A(i, i);
  return s;
}

std::string CarnotGroup::describe() const {
  std::ostringstream os;
  os << "n=" << n() << " h=(";
  for (int s = 0; s < step(); ++s) os << (s ? "," : "") << sig_.h[s];
  os << ") Q=" << Q() << " step=" << step() << " C=" << cnorm_;
  return os.str();
}

CarnotGroup heisenberg(int n) {
  if (n < 1) throw Error(ErrorCode::InvalidInput, "heisenberg needs n >= 1");
  StructureTensor t;
  t.signature = StrataSignature::from_dims({2 * n, 1});
  for (int i = 0; i < n; ++i) t.entries.push_back({2 * i, 2 * i + 1, 2 * n, 1.0});
  return CarnotGroup(t);
}

CarnotGroup euclidean(int n) {
  StructureTensor t;
  t.signature = StrataSignature::from_dims({n});
  return CarnotGroup(t);
}

CarnotGroup free_step2(int m) {
  if (m < 2) throw Error(ErrorCode::InvalidInput, "free step-2 group needs at least 2 generators");
  StructureTensor t;
  int v = m * (m - 1) / 2;
  t.signature = StrataSignature::from_dims({m, v});
  int r = m;
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b) t.entries.push_back({a, b, r++, 1.0});
  return CarnotGroup(t);
}

CarnotGroup h_type_from_matrices(const std::vector<Mat>& J) {
  if (J.empty()) throw Error(ErrorCode::InvalidInput, "need at least one matrix");
  int hh = static_cast<int>(J[0].rows());
  StructureTensor t;
  t.signature = StrataSignature::from_dims({hh, static_cast<int>(J.size())});
  for (std::size_t a = 0; a < J.size(); ++a) {
    if (J[a].rows() != hh || J[a].cols() != hh)
      throw Error(ErrorCode::InvalidInput, "matrix sizes differ");
    for (int i = 0; i < hh; ++i)
      for (int j = 0; j < hh; ++j)
        if (J[a](i, j) != 0.0) t.entries.push_back({i, j, hh + static_cast<int>(a), J[a](i, j)});
  }
  return CarnotGroup(t);
}

CarnotGroup product_with_euclidean(const CarnotGroup& g, int m) {
  if (m < 0) throw Error(ErrorCode::InvalidInput, "negative Euclidean factor");
  std::vector<int> h = g.signature().h;
  int h1 = h[0];
  h[0] += m;
  StructureTensor t;
  t.signature = StrataSignature::from_dims(h);
  auto remap = [&](int l) { return l < h1 ? l : l + m; };
  const int N = g.n();
  for (int r = 0; r < N; ++r)
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j)
        if (g.C(r, i, j) != 0.0) t.entries.push_back({remap(i), remap(j), remap(r), g.C(r, i, j)});
  return CarnotGroup(t);
}

CarnotGroup step2_from_tensor(const StructureTensor& t) {
  if (t.signature.h.size() != 2)
    throw Error(ErrorCode::InvalidStratification, "step2_from_tensor needs exactly two strata");
  return CarnotGroup(t);
}

std::string HomNormSpec::name() const {
  return kind == Kind::koranyi_step2 ? "koranyi_step2" : "generic_power";
}

int norm_power(const HomNormSpec& spec, const CarnotGroup& g) {
  if (spec.kind == HomNormSpec::Kind::koranyi_step2) return 4;
  int K = 1;
  for (int i = 2; i <= g.step(); ++i) K = std::lcm(K, i);
  return 2 * K;
}

double hom_norm_power(const HomNormSpec& spec, const CarnotGroup& g, const Vec& x) {
  const auto& sig = g.signature();
  if (spec.kind == HomNormSpec::Kind::koranyi_step2) {
    if (g.step() != 2)
      throw Error(ErrorCode::UnsupportedNormForGroup, "koranyi_step2 needs a step-2 group");
    double c = spec.coefs.empty() ? 16.0 : spec.coefs[0];
    double xh = x.head(g.h()).squaredNorm();
    double xv = x.tail(g.n() - g.h()).squaredNorm();
    return xh * xh + c * xv;
  }
  int twoK = norm_power(spec, g);
  double acc = 0.0;
  for (int s = 1; s <= g.step(); ++s) {
    double w = static_cast<std::size_t>(s - 1) < spec.coefs.size() ? spec.coefs[s - 1] : 1.0;
    double sq = x.segment(sig.stratum_begin(s), sig.h[s - 1]).squaredNorm();
    acc += w * std::pow(sq, twoK / (2 * s));
  }
  return acc;
}

double hom_norm(const HomNormSpec& spec, const CarnotGroup& g, const Vec& x) {
  return std::pow(hom_norm_power(spec, g, x), 1.0 / norm_power(spec, g));
}

double hom_dist(const HomNormSpec& spec, const CarnotGroup& g, const Vec& x, const Vec& y) {
  return hom_norm(spec, g, g.product(g.inverse(y), x));
}

}  // namespace carnot
