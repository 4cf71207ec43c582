#include <algorithm>
#include <cmath>

#include "dmrac/core_math.hpp"

namespace dmrac {

Vector singular_values(const Matrix& m) {
  if (m.size() == 0) throw Error(Errc::InvalidArgument, "singular_values: empty matrix");
  // Orthogonalize the columns of a tall working copy; the column norms are then
  // the singular values.
  Matrix u = m.rows() >= m.cols() ? m : Matrix(m.transpose());
  const Eigen::Index cols = u.cols();
  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 80;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index i = 0; i + 1 < cols; ++i) {
      for (Eigen::Index j = i + 1; j < cols; ++j) {
        const double alpha = u.col(i).squaredNorm();
        const double beta = u.col(j).squaredNorm();
        const double gamma = u.col(i).dot(u.col(j));
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (Eigen::Index r = 0; r < u.rows(); ++r) {
          const double ui = u(r, i);
          const double uj = u(r, j);
          u(r, i) = c * ui - s * uj;
          u(r, j) = s * ui + c * uj;
        }
      }
    }
    if (!rotated) break;
  }

  Vector sigma = u.colwise().norm().transpose();
  std::sort(sigma.data(), sigma.data() + sigma.size(), std::greater<>());
  return sigma;
}

double min_singular_value(const Matrix& m) {
  const Vector sigma = singular_values(m);
  return sigma(sigma.size() - 1);
}

}  // namespace dmrac
