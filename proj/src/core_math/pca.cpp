#include <algorithm>
#include <numeric>

#include "dmrac/core_math.hpp"

namespace dmrac {

PcaResult pca_project(const Matrix& points, int d) {
  if (d < 1 || points.rows() < 1 || d > points.cols()) {
    throw Error(Errc::InvalidArgument, "pca_project: need 1 <= d <= dimension and at least one point");
  }
  require_finite(points, "pca points");
  PcaResult out;
  out.mean = points.colwise().mean().transpose();
  const Matrix centered = points.rowwise() - out.mean.transpose();
  const double denom = std::max<double>(1.0, static_cast<double>(points.rows() - 1));
  const Matrix cov = centered.transpose() * centered / denom;

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  // Eigen returns ascending order.
  const Vector values = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Matrix vectors = eig.eigenvectors().rowwise().reverse();
  const double total = values.sum();
  const double floor = 1e-12 * std::max(values.size() > 0 ? values(0) : 0.0, 1e-300);

  int available = 0;
  while (available < d && values(available) > floor && total > 0.0) ++available;
  out.degenerate = available < d || points.rows() < d + 1;
  out.components = available;
  out.directions = vectors.leftCols(available);
  out.projected = centered * out.directions;
  out.explained_ratio = available > 0 ? Vector(values.head(available) / total) : Vector();
  return out;
}

}  // namespace dmrac
