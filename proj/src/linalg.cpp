#include "sdlab/linalg.hpp"

#include <cmath>
#include <string>

#include "eigen_map.hpp"
#include "sdlab/errors.hpp"

namespace sdlab {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

}  // namespace

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    throw ValidationError("dot: dimension mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  return emap(a).dot(emap(b));
}

double norm2(const Vec& v) { return emap(v).norm(); }

double squared_norm(const Vec& v) { return emap(v).squaredNorm(); }

Vec matvec_transposed(const Matrix& m, const Vec& v) {
  if (v.size() != m.rows) {
    throw ValidationError("matvec_transposed: dimension mismatch: M is " + shape_str(m) +
                          ", v has length " + std::to_string(v.size()));
  }
  Vec out(m.cols, 0.0);
  emap(out).noalias() = emap(m).transpose() * emap(v);
  return out;
}

Vec matvec(const Matrix& m, const Vec& v) {
  if (v.size() != m.cols) {
    throw ValidationError("matvec: dimension mismatch: M is " + shape_str(m) +
                          ", v has length " + std::to_string(v.size()));
  }
  Vec out(m.rows, 0.0);
  emap(out).noalias() = emap(m) * emap(v);
  return out;
}

Vec column(const Matrix& m, std::size_t j) {
  if (j >= m.cols) {
    throw ValidationError("column: index " + std::to_string(j) + " out of range for " +
                          shape_str(m) + " matrix");
  }
  Vec out(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) out[i] = m(i, j);
  return out;
}

Vec axpy(double alpha, const Vec& x, const Vec& y) {
  if (x.size() != y.size()) {
    throw ValidationError("axpy: dimension mismatch: x has length " + std::to_string(x.size()) +
                          ", y has length " + std::to_string(y.size()));
  }
  Vec out(y);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += alpha * x[i];
  return out;
}

Vec finite_difference_gradient(const std::function<double(const Vec&)>& f, const Vec& x0,
                               double h) {
  if (!(h > 0.0)) throw ValidationError("finite_difference_gradient: h must be > 0");
  Vec grad(x0.size(), 0.0);
  Vec x = x0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    x[i] = x0[i] + h;
    double fp = f(x);
    x[i] = x0[i] - h;
    double fm = f(x);
    x[i] = x0[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_difference_gradient: non-finite f at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace sdlab
