#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "amplio/error.hpp"
#include "amplio/vector.hpp"

namespace amplio {

struct Point2D {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2D&, const Point2D&) = default;
};

enum class ProjectionKind { Pca, External };

inline std::string_view to_string(ProjectionKind k) { return k == ProjectionKind::Pca ? "pca" : "external"; }

struct ProjectionModel {
  ProjectionKind kind = ProjectionKind::Pca;
  Vector mean;
  RowMatrix components;  // 2 x d, orthonormal rows (pca)
  Vector explained_variance;  // per component
  int version = 0;
  std::string fitted_on;     // dataset name the model was fitted on
  bool degenerate = false;   // data rank < 2; missing axes padded with zeros
  std::string external_token;

  Eigen::Index dim() const { return mean.size(); }
  std::string id() const { return fitted_on + ":v" + std::to_string(version); }
};

/// Largest-|entry| coordinate made positive; the first such coordinate wins ties.
inline void fix_sign(Eigen::Ref<Eigen::RowVectorXd> row) {
  Eigen::Index arg = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    if (std::abs(row[i]) > best) {
      best = std::abs(row[i]);
      arg = i;
    }
  }
  if (row[arg] < 0.0) row = -row;
}

/// Two-component PCA on the columns of `data` (d x N).
inline ProjectionModel fit_pca(const Matrix& data) {
  if (data.cols() < 3) fail(ErrorCode::InvalidInput, "projection needs at least 3 embeddings");
  const auto d = data.rows();
  ProjectionModel m;
  m.kind = ProjectionKind::Pca;
  m.mean = data.rowwise().mean();
  const Matrix centered = data.colwise() - m.mean;
  const Matrix cov = (centered * centered.transpose()) / static_cast<double>(data.cols() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) fail(ErrorCode::DegenerateProjection, "covariance eigendecomposition failed");

  m.components = RowMatrix::Zero(2, d);
  m.explained_variance = Vector::Zero(2);
  const double top = std::max(eig.eigenvalues()[d - 1], 0.0);
  const double tol = std::max(top, 1.0) * 1e-12 * static_cast<double>(d);
  for (int c = 0; c < 2 && c < d; ++c) {
    const double lambda = eig.eigenvalues()[d - 1 - c];
    if (!(lambda > tol)) {
      m.degenerate = true;
      continue;
    }
    m.components.row(c) = eig.eigenvectors().col(d - 1 - c).transpose();
    fix_sign(m.components.row(c));
    m.explained_variance[c] = lambda;
  }
  if (d < 2) m.degenerate = true;
  return m;
}

inline ProjectionModel fit_pca(const std::vector<Vector>& embeddings) {
  if (embeddings.empty()) fail(ErrorCode::InvalidInput, "projection needs at least 3 embeddings");
  Matrix data(embeddings.front().size(), static_cast<Eigen::Index>(embeddings.size()));
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    require_dim(embeddings[i], data.rows());
    data.col(static_cast<Eigen::Index>(i)) = embeddings[i];
  }
  return fit_pca(data);
}

inline Point2D project_pca(const ProjectionModel& model, const Vector& v) {
  require_dim(v, model.dim());
  const Vector c = v - model.mean;
  return {model.components.row(0).dot(c), model.components.row(1).dot(c)};
}

/// Fit/reproject strategy. The dataset store only talks to this interface.
class ProjectionBackend {
 public:
  virtual ~ProjectionBackend() = default;
  virtual ProjectionModel fit(const Matrix& data) const = 0;
  virtual std::vector<Point2D> project(const ProjectionModel& model, const Matrix& data) const = 0;
};

class PcaBackend final : public ProjectionBackend {
 public:
  ProjectionModel fit(const Matrix& data) const override { return fit_pca(data); }

  std::vector<Point2D> project(const ProjectionModel& model, const Matrix& data) const override {
    if (model.kind != ProjectionKind::Pca) fail(ErrorCode::InvalidInput, "PCA backend cannot apply an external model");
    std::vector<Point2D> out;
    out.reserve(static_cast<std::size_t>(data.cols()));
    for (Eigen::Index i = 0; i < data.cols(); ++i) out.push_back(project_pca(model, data.col(i)));
    return out;
  }
};

/// Reprojection through the fitted map; never refits.
inline Point2D project(const ProjectionModel& model, const Vector& v) {
  if (model.kind != ProjectionKind::Pca) fail(ErrorCode::InvalidInput, "external models are applied through their backend");
  return project_pca(model, v);
}

}  // namespace amplio
