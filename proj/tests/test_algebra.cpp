#include <doctest.h>

#include <cmath>
#include <random>

#include "carnotgeo/algebra.hpp"

using namespace carnot;

namespace {

Vec v3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}

Vec random_point(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> U(-scale, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = U(rng);
  return v;
}

// step-3 free-ish algebra: Engel group, h = (2,1,1)
CarnotGroup engel() {
  StructureTensor t;
  t.signature = StrataSignature::from_dims({2, 1, 1});
  t.entries = {{0, 1, 2, 1.0}, {0, 2, 3, 1.0}};
  return CarnotGroup(t);
}

}  // namespace

TEST_CASE("signature arithmetic and ord") {
  auto s = StrataSignature::from_dims({2, 1});
  CHECK(s.n == 3);
  CHECK(s.Q == 4);
  CHECK(s.ord == std::vector<int>{1, 1, 2});
  CHECK_THROWS_AS(StrataSignature::from_dims({2, 0}), Error);
}

TEST_CASE("validate_algebra examples") {
  StructureTensor t;
  t.signature = StrataSignature::from_dims({2, 1});
  t.entries = {{0, 1, 2, 1.0}, {1, 0, 2, -1.0}};
  CHECK(validate_algebra(t).valid);

  t.entries = {{0, 1, 2, 1.0}, {1, 0, 2, 1.0}};
  auto rep = validate_algebra(t);
  CHECK_FALSE(rep.valid);
  CHECK(rep.failures.at(0).invariant == "skew");

  t.entries = {{0, 1, 1, 1.0}};
  rep = validate_algebra(t);
  CHECK_FALSE(rep.valid);
  bool grading = false;
  for (auto& f : rep.failures) grading |= f.invariant == "grading";
  CHECK(grading);

  t.entries = {{0, 5, 2, 1.0}};
  CHECK_THROWS_AS(validate_algebra(t), Error);
  t.entries = {};
  t.declared_n = 4;
  try {
    validate_algebra(t);
    FAIL("expected InvalidStratification");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidStratification);
  }
}

TEST_CASE("Jacobi and generation failures") {
  // h = (3,1,1) with [X1,X2]=X4, [X2,X3]=X4, [X1,X4]=X5, [X3,X4]=2X5:
  // [X1,[X2,X3]] + [X2,[X3,X1]] + [X3,[X1,X2]] = X5 + 0 + 2X5
  StructureTensor t;
  t.signature = StrataSignature::from_dims({3, 1, 1});
  t.entries = {{0, 1, 3, 1.0}, {1, 2, 3, 1.0}, {0, 3, 4, 1.0}, {2, 3, 4, 2.0}};
  auto rep = validate_algebra(t);
  bool jacobi = false;
  for (auto& f : rep.failures) jacobi |= f.invariant == "jacobi";
  CHECK(jacobi);

  StructureTensor u;
  u.signature = StrataSignature::from_dims({2, 2});
  u.entries = {{0, 1, 2, 1.0}};
  rep = validate_algebra(u);
  CHECK_FALSE(rep.valid);
  CHECK(rep.failures.back().invariant == "generation");
}

TEST_CASE("heisenberg group law examples") {
  CarnotGroup g = heisenberg(1);
  CHECK(g.n() == 3);
  CHECK(g.Q() == 4);
  Vec z = g.product(v3(1, 0, 0), v3(0, 1, 0));
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 1.0);
  CHECK(z[2] == 0.5);
  Vec x = v3(0.3, -1.2, 2.0);
  CHECK((g.product(x, Vec::Zero(3)) - x).norm() == 0.0);
  CHECK(g.product(v3(1, 0, 0), v3(-1, 0, 0)).norm() == 0.0);
  CHECK((g.dilate(2.0, v3(1, 1, 1)) - v3(2, 2, 4)).norm() == 0.0);
  CHECK(g.dilate(0.0, x).norm() == 0.0);
  CHECK((g.dilate(1.0, x) - x).norm() == 0.0);
  CHECK_THROWS_AS(g.dilate(-1.0, x), Error);
}

TEST_CASE("heisenberg(2) horizontal matrix") {
  CarnotGroup g = heisenberg(2);
  Mat expected = Mat::Zero(4, 4);
  expected(0, 1) = 1;
  expected(1, 0) = -1;
  expected(2, 3) = 1;
  expected(3, 2) = -1;
  CHECK((g.hmat(4) - expected).norm() == 0.0);
  // only C^5_ij with i,j horizontal can be nonzero
  for (int r = 0; r < 5; ++r)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        if (g.C(r, i, j) != 0.0) {
          CHECK(r == 4);
          CHECK(i < 4);
          CHECK(j < 4);
        }
  CHECK(g.cnorm() == doctest::Approx(1.0));
}

TEST_CASE("product with euclidean factor") {
  CarnotGroup g = product_with_euclidean(heisenberg(1), 2);
  CHECK(g.n() == 5);
  CHECK(g.signature().h == std::vector<int>{4, 1});
  CHECK(g.Q() == 6);
  CHECK(g.C(4, 0, 1) == 1.0);
}

TEST_CASE("frame matrix examples") {
  CarnotGroup g = heisenberg(1);
  Vec x = v3(0.7, -0.4, 3.0);
  Mat A = g.frame(x);
  CHECK(A(0, 0) == 1.0);
  CHECK(A(1, 0) == 0.0);
  CHECK(A(2, 0) == doctest::Approx(0.2));  // -y/2
  CHECK(A(2, 1) == doctest::Approx(0.35));  // +x/2
  CHECK(A.determinant() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK((g.frame(Vec::Zero(3)) - Mat::Identity(3, 3)).norm() == 0.0);
  CHECK((g.metric(v3(0, 0, 5)) - Mat::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("frame is the derivative of left translation, step 2 and 3") {
  std::mt19937_64 rng(7);
  for (const CarnotGroup& g : {heisenberg(1), free_step2(3), engel()}) {
    for (int k = 0; k < 5; ++k) {
      Vec x = random_point(rng, g.n());
      Mat A = g.frame(x);
      const double e = 1e-6;
      for (int i = 0; i < g.n(); ++i) {
        Vec ei = Vec::Zero(g.n());
        ei[i] = e;
        Vec fd = (g.product(x, ei) - g.product(x, -ei)) / (2 * e);
        CHECK((fd - A.col(i)).norm() < 1e-8);
      }
      auto dA = g.frame_derivatives(x);
      for (int m = 0; m < g.n(); ++m) {
        Vec em = Vec::Zero(g.n());
        em[m] = e;
        Mat fd = (g.frame(x + em) - g.frame(x - em)) / (2 * e);
        CHECK((fd - dA[m]).norm() < 1e-8);
      }
      Mat G = g.metric(x);
      CHECK((A.transpose() * G * A - Mat::Identity(g.n(), g.n())).norm() < 1e-12);
    }
  }
}

TEST_CASE("group properties on random points") {
  std::mt19937_64 rng(11);
  for (const CarnotGroup& g : {heisenberg(1), heisenberg(2), free_step2(3), engel()}) {
    for (int k = 0; k < 50; ++k) {
      Vec x = random_point(rng, g.n()), y = random_point(rng, g.n()), z = random_point(rng, g.n());
      CHECK((g.product(g.product(x, y), z) - g.product(x, g.product(y, z))).norm() < 1e-12);
      CHECK(g.product(g.inverse(x), x).norm() < 1e-14);
      double t = 0.3 + k * 0.05;
      CHECK((g.dilate(t, g.product(x, y)) - g.product(g.dilate(t, x), g.dilate(t, y))).norm() < 1e-12);
      CHECK((g.dilate(t, g.dilate(1.7, x)) - g.dilate(1.7 * t, x)).norm() < 1e-12);
      CHECK(std::abs(g.frame(x).determinant() - 1.0) < 1e-12);
      CHECK(g.div_h_position(x) == doctest::Approx(g.h()).epsilon(1e-15));
    }
  }
}

TEST_CASE("unsupported step for the group law") {
  StructureTensor t;
  t.signature = StrataSignature::from_dims({2, 1, 1, 1});
  t.entries = {{0, 1, 2, 1.0}, {0, 2, 3, 1.0}, {0, 3, 4, 1.0}};
  CarnotGroup g(t);
  CHECK(g.Q() == 2 + 2 + 3 + 4);
  Vec x = Vec::Ones(5);
  try {
    g.product(x, x);
    FAIL("expected UnsupportedStep");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsupportedStep);
  }
  CHECK_THROWS_AS(g.frame(x), Error);
  CHECK(g.dilate(2.0, x)[4] == 16.0);
}

TEST_CASE("connection coefficients") {
  CarnotGroup g = heisenberg(1);
  bool found = false;
  for (auto c : g.connection()) {
    if (c.i == 0 && c.j == 1 && c.r == 2) {
      CHECK(c.value == 0.5);
      found = true;
    }
    CHECK_FALSE((c.i < 2 && c.j < 2 && c.r < 2));
  }
  CHECK(found);
  CHECK(euclidean(3).connection().empty());
  for (auto c : free_step2(3).connection()) CHECK_FALSE((c.i < 3 && c.j < 3 && c.r < 3));
}

TEST_CASE("homogeneous norms") {
  CarnotGroup g = heisenberg(1);
  auto K = HomNormSpec::koranyi();
  CHECK(hom_norm(K, g, v3(0, 0, 0.25)) == doctest::Approx(1.0));
  CHECK(hom_norm(K, g, v3(0, 0, -4.0)) == doctest::Approx(2.0 * std::sqrt(4.0)));
  CHECK(hom_norm(K, g, v3(1, 0, 0)) == doctest::Approx(1.0));
  CHECK(hom_norm(K, g, Vec::Zero(3)) == 0.0);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 100; ++k) {
    Vec x = random_point(rng, 3);
    double r = hom_norm(K, g, x);
    CHECK(std::abs(hom_norm(K, g, g.dilate(3.0, x)) - 3.0 * r) <= 1e-12 * r);
    Vec y = random_point(rng, 3);
    CHECK(hom_dist(K, g, x, y) == doctest::Approx(hom_dist(K, g, y, x)));
  }
  CHECK_THROWS_AS(hom_norm(K, g, Vec::Zero(3)) + hom_norm(K, engel(), Vec::Zero(4)), Error);
  auto G = HomNormSpec::generic();
  CarnotGroup e = engel();
  CHECK(norm_power(G, e) == 12);
  for (int k = 0; k < 20; ++k) {
    Vec x = random_point(rng, 4);
    double r = hom_norm(G, e, x);
    CHECK(std::abs(hom_norm(G, e, e.dilate(0.5, x)) - 0.5 * r) <= 1e-12 * r);
  }
}
