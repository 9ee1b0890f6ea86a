#include <doctest.h>

#include <cmath>

#include "sdlab/errors.hpp"
#include "sdlab/linalg.hpp"
#include "sdlab/rng.hpp"
#include "support/oracles.hpp"

using namespace sdlab;

namespace {

Matrix from_columns(std::size_t m, const std::vector<Vec>& cols) {
  Matrix out(m, cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (std::size_t i = 0; i < m; ++i) out(i, j) = cols[j][i];
  }
  return out;
}

}  // namespace

TEST_CASE("matvec_transposed on fixed cases") {
  Matrix eye(2, 2);
  eye(0, 0) = eye(1, 1) = 1.0;
  const Vec r1 = matvec_transposed(eye, {0.3, 0.8});
  CHECK(r1[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(r1[1] == doctest::Approx(0.8).epsilon(1e-15));

  const Matrix m = from_columns(2, {{1.0, 0.0}, {0.6, 0.8}});
  const Vec r2 = matvec_transposed(m, {1.0, 1.0});
  const Vec want = oracle::naive_matvec_transposed(m, {1.0, 1.0});
  CHECK(r2[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r2[1] == doctest::Approx(1.4).epsilon(1e-14));
  CHECK(r2[0] == doctest::Approx(want[0]).epsilon(1e-15));
  CHECK(r2[1] == doctest::Approx(want[1]).epsilon(1e-15));

  const Matrix zeros(2, 3);
  const Vec r3 = matvec_transposed(zeros, {5.0, -5.0});
  for (double v : r3) CHECK(v == 0.0);

  CHECK_THROWS_AS(matvec_transposed(m, {1.0, 2.0, 3.0}), ValidationError);
  CHECK_THROWS_WITH_AS(matvec_transposed(m, {1.0, 2.0, 3.0}),
                       doctest::Contains("2x2"), ValidationError);
}

TEST_CASE("matvec_transposed agrees with the naive oracle on random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 1 + rng.uniform_below(8);
    const std::size_t p = 1 + rng.uniform_below(8);
    Matrix mat(m, p);
    for (double& v : mat.data) v = rng.normal();
    Vec v(m);
    for (double& x : v) x = rng.normal();
    const Vec got = matvec_transposed(mat, v);
    const Vec want = oracle::naive_matvec_transposed(mat, v);
    for (std::size_t j = 0; j < p; ++j) {
      const double denom = std::max(1.0, std::abs(want[j]));
      CHECK(std::abs(got[j] - want[j]) / denom < 1e-12);
    }
  }
}

TEST_CASE("column extraction") {
  Matrix eye(2, 2);
  eye(0, 0) = eye(1, 1) = 1.0;
  CHECK(column(eye, 0) == Vec{1.0, 0.0});
  CHECK(column(eye, 1) == Vec{0.0, 1.0});

  const Matrix m = from_columns(2, {{1.0, 0.0}, {0.6, 0.8}});
  CHECK(column(m, 1) == Vec{0.6, 0.8});
  CHECK_THROWS_AS(column(m, 2), ValidationError);
}

TEST_CASE("axpy") {
  CHECK(axpy(0.0, {9.0, 9.0}, {1.0, 2.0}) == Vec{1.0, 2.0});
  const Vec r = axpy(-1.4, {0.6, 0.8}, {1.0, 1.0});
  CHECK(r[0] == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(-0.12).epsilon(1e-12));
  CHECK(axpy(1.0, {1.0, 1.0}, {-1.0, -1.0}) == Vec{0.0, 0.0});
  CHECK_THROWS_AS(axpy(1.0, {1.0}, {1.0, 2.0}), ValidationError);
}

TEST_CASE("axpy is linear in alpha on exact-float points") {
  const Vec x{2.0, -4.0, 0.5};
  const Vec y{1.0, 1.0, 1.0};
  for (double alpha : {0.0, 1.0, 2.0, -3.0, 0.5}) {
    const Vec lhs = axpy(2.0 * alpha, x, y);
    const Vec once = axpy(alpha, x, y);
    const Vec rhs = axpy(alpha, x, once);
    CHECK(lhs == rhs);
  }
}

TEST_CASE("finite difference gradient") {
  auto sqnorm = [](const Vec& v) { return squared_norm(v); };
  const Vec g = finite_difference_gradient(sqnorm, {1.0, 2.0}, 1e-5);
  CHECK(std::abs(g[0] - 2.0) < 1e-6);
  CHECK(std::abs(g[1] - 4.0) < 1e-6);

  auto constant = [](const Vec&) { return 3.5; };
  const Vec gc = finite_difference_gradient(constant, {0.4, -0.2, 7.0}, 1e-5);
  for (double v : gc) CHECK(std::abs(v) < 1e-9);

  auto prod = [](const Vec& v) { return v[0] * v[1]; };
  const Vec gp = finite_difference_gradient(prod, {3.0, 5.0}, 1e-5);
  CHECK(std::abs(gp[0] - 5.0) < 1e-6);
  CHECK(std::abs(gp[1] - 3.0) < 1e-6);

  SUBCASE("tolerance scales as promised for h in {1e-4, 1e-5}") {
    for (double h : {1e-4, 1e-5}) {
      const Vec gh = finite_difference_gradient(sqnorm, {0.3, -1.7, 2.2}, h);
      const Vec want{0.6, -3.4, 4.4};
      for (std::size_t i = 0; i < gh.size(); ++i) {
        CHECK(std::abs(gh[i] - want[i]) < 10.0 * h * h + 1e-9);
      }
    }
  }

  SUBCASE("non-finite evaluation names the coordinate") {
    auto bad = [](const Vec& v) { return v[1] > 0.5 ? std::log(-1.0) : 1.0; };
    CHECK_THROWS_WITH_AS(finite_difference_gradient(bad, {0.0, 0.5}, 0.1),
                         doctest::Contains("coordinate 1"), NumericError);
    CHECK_THROWS_AS(finite_difference_gradient(sqnorm, {1.0}, 0.0), ValidationError);
  }
}
