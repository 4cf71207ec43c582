#include <algorithm>
#include <string>

#include "dmrac/core_math.hpp"

namespace dmrac {

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_finite(const Matrix& m, const char* what) {
  if (m.size() == 0) throw Error(Errc::InvalidArgument, std::string(what) + " is empty");
  if (!m.allFinite()) throw Error(Errc::InvalidArgument, std::string(what) + " has non-finite entries");
}

std::vector<std::complex<double>> eigenvalues(const Matrix& a) {
  if (a.rows() != a.cols()) throw Error(Errc::InvalidArgument, "eigenvalues: matrix must be square");
  // Hessenberg reduction followed by shifted QR iteration.
  Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw Error(Errc::SingularSystem, "eigenvalues: QR iteration did not converge");
  }
  const auto& values = solver.eigenvalues();
  return {values.data(), values.data() + values.size()};
}

bool is_hurwitz(const Matrix& a, double tol) {
  const auto values = eigenvalues(a);
  return std::all_of(values.begin(), values.end(),
                     [tol](const std::complex<double>& v) { return v.real() < -tol; });
}

}  // namespace dmrac
