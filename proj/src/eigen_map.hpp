#pragma once

#include <Eigen/Core>

#include "sdlab/linalg.hpp"

namespace sdlab {

using ERowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const ERowMat> emap(const Matrix& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

inline Eigen::Map<ERowMat> emap(Matrix& m) {
  return {m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols)};
}

inline Eigen::Map<const Eigen::VectorXd> emap(const Vec& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

inline Eigen::Map<Eigen::VectorXd> emap(Vec& v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

}  // namespace sdlab
