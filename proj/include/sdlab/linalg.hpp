#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace sdlab {

using Vec = std::vector<double>;

/// Dense row-major matrix of 64-bit floats.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row_ptr(std::size_t i) { return data.data() + i * cols; }
  const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }
};

double dot(const Vec& a, const Vec& b);
double norm2(const Vec& v);
double squared_norm(const Vec& v);

/// M^T v, length M.cols.
Vec matvec_transposed(const Matrix& m, const Vec& v);

/// M v, length M.rows.
Vec matvec(const Matrix& m, const Vec& v);

/// j-th column of M, length M.rows.
Vec column(const Matrix& m, std::size_t j);

/// y + alpha * x, elementwise.
Vec axpy(double alpha, const Vec& x, const Vec& y);

/// Central differences (f(x0 + h e_i) - f(x0 - h e_i)) / (2h) per coordinate.
Vec finite_difference_gradient(const std::function<double(const Vec&)>& f, const Vec& x0,
                               double h);

}  // namespace sdlab
