#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "carnotgeo/error.hpp"

namespace carnot {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Indices are 0-based in the C++ API; reports and files use 1-based indices.
struct StrataSignature {
  std::vector<int> h;  // stratum dimensions h_1..h_k
  int n = 0;
  int Q = 0;
  std::vector<int> ord;  // ord[l] in 1..k

  static StrataSignature from_dims(const std::vector<int>& h);
  int step() const { return static_cast<int>(h.size()); }
  // first index of stratum s (1-based stratum number)
  int stratum_begin(int s) const;
  int stratum_end(int s) const { return stratum_begin(s) + h[s - 1]; }
};

struct StructureEntry {
  int i, j, r;
  double value;
};

struct StructureTensor {
  StrataSignature signature;
  std::vector<StructureEntry> entries;  // C^r_{ij}; the (j,i) partner is implied when absent
  int declared_n = -1;                  // optional explicit dimension, checked against sum(h)
};

struct ValidationFailure {
  std::string invariant;  // skew, grading, jacobi, generation
  std::vector<int> indices;  // 1-based
  double value = 0.0;
};

struct ValidationReport {
  bool valid = true;
  std::vector<ValidationFailure> failures;
  std::string summary() const;
};

ValidationReport validate_algebra(const StructureTensor& tensor, double tol = 1e-12);

class CarnotGroup {
 public:
  explicit CarnotGroup(const StructureTensor& tensor);

  int n() const { return sig_.n; }
  int h() const { return sig_.h[0]; }
  int step() const { return sig_.step(); }
  int Q() const { return sig_.Q; }
  int ord(int l) const { return sig_.ord.at(l); }
  const StrataSignature& signature() const { return sig_; }
  const StructureTensor& tensor() const { return tensor_; }

  double C(int r, int i, int j) const { return dense_[(r * n() + i) * n() + j]; }
  // (ad_{e_m})_{r,i} = C^r_{m i}
  const Mat& ad_basis(int m) const { return ad_[m]; }
  // C^alpha_H for alpha in the second stratum
  Mat hmat(int alpha) const;
  // sum over vertical alpha of the spectral norm of C^alpha_H
  double cnorm() const { return cnorm_; }

  Vec bracket(const Vec& x, const Vec& y) const;
  Vec product(const Vec& x, const Vec& y) const;
  Vec inverse(const Vec& x) const { return -x; }
  Vec dilate(double t, const Vec& x) const;

  // column i holds the coordinate components of X_i(x)
  Mat frame(const Vec& x) const;
  // d/dx_m of frame(x), m = 0..n-1
  std::vector<Mat> frame_derivatives(const Vec& x) const;
  Mat frame_inverse(const Vec& x) const;
  Mat metric(const Vec& x) const;

  struct Christoffel {
    int i, j, r;
    double value;
  };
  // nonzero Gamma^r_{ij} = (C^r_ij - C^i_jr + C^j_ri)/2
  std::vector<Christoffel> connection() const;

  // analytic div_H of the horizontal position field x_H at x
  double div_h_position(const Vec& x) const;

  std::string describe() const;

 private:
  void require_law() const;

  StructureTensor tensor_;
  StrataSignature sig_;
  std::vector<double> dense_;
  std::vector<Mat> ad_;
  double cnorm_ = 0.0;
};

CarnotGroup heisenberg(int n);
CarnotGroup euclidean(int n);
CarnotGroup free_step2(int generators);
CarnotGroup h_type_from_matrices(const std::vector<Mat>& J);
CarnotGroup product_with_euclidean(const CarnotGroup& g, int m);
CarnotGroup step2_from_tensor(const StructureTensor& t);

struct HomNormSpec {
  enum class Kind { koranyi_step2, generic_power };
  Kind kind = Kind::koranyi_step2;
  // koranyi: coefs = {16}; generic_power: one weight per stratum (default 1)
  std::vector<double> coefs;

  static HomNormSpec koranyi(double c = 16.0) { return {Kind::koranyi_step2, {c}}; }
  static HomNormSpec generic(std::vector<double> w = {}) { return {Kind::generic_power, std::move(w)}; }
  std::string name() const;
};

// exponent 2K with K = lcm(1..k); rho^{2K} is a polynomial in the coordinates
int norm_power(const HomNormSpec& spec, const CarnotGroup& g);
double hom_norm_power(const HomNormSpec& spec, const CarnotGroup& g, const Vec& x);
double hom_norm(const HomNormSpec& spec, const CarnotGroup& g, const Vec& x);
double hom_dist(const HomNormSpec& spec, const CarnotGroup& g, const Vec& x, const Vec& y);

}  // namespace carnot
