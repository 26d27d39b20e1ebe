#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amplio/error.hpp"

namespace amplio {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void require_same_dim(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::DimensionError,
         "dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
}

inline void require_dim(const Vector& v, Eigen::Index d) {
  if (v.size() != d) {
    fail(ErrorCode::DimensionError,
         "expected dimension " + std::to_string(d) + ", got " + std::to_string(v.size()));
  }
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline Vector normalize(const Vector& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorCode::DegenerateVector, "cannot normalize a zero or non-finite vector");
  return v / n;
}

inline double cosine(const Vector& a, const Vector& b) {
  require_same_dim(a, b);
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) fail(ErrorCode::DegenerateVector, "cosine of a zero vector");
  return a.dot(b) / (na * nb);
}

inline Vector to_vector(const std::vector<double>& values) {
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace amplio
