#include <cmath>

#include "dmrac/core_math.hpp"

namespace dmrac {
namespace {

// (I kron A^T + A^T kron I), acting on column-major vec(P).
Matrix kronecker_operator(const Matrix& a) {
  const Eigen::Index n = a.rows();
  Matrix op = Matrix::Zero(n * n, n * n);
  const Matrix at = a.transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    // I kron A^T: block-diagonal copies of A^T.
    op.block(j * n, j * n, n, n) += at;
    // A^T kron I: block (i, j) is A^T(i, j) * I.
    for (Eigen::Index i = 0; i < n; ++i) {
      op.block(i * n, j * n, n, n).diagonal().array() += at(i, j);
    }
  }
  return op;
}

}  // namespace

double lyapunov_residual(const Matrix& a, const Matrix& p, const Matrix& q) {
  return (a.transpose() * p + p * a + q).norm();
}

Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
  require_finite(a, "A_rm");
  require_finite(q, "Q");
  if (a.rows() != a.cols() || q.rows() != q.cols() || a.rows() != q.rows()) {
    throw Error(Errc::InvalidArgument, "solve_lyapunov: A and Q must be square and equal size");
  }
  const double q_scale = std::max(1.0, q.norm());
  if ((q - q.transpose()).norm() > 1e-12 * q_scale) {
    throw Error(Errc::InvalidArgument, "solve_lyapunov: Q must be symmetric");
  }
  if (Eigen::LLT<Matrix>(q).info() != Eigen::Success) {
    throw Error(Errc::InvalidArgument, "solve_lyapunov: Q must be positive-definite");
  }
  if (!is_hurwitz(a)) throw Error(Errc::NotHurwitz, "solve_lyapunov: A_rm has an eigenvalue with Re >= 0");

  const Eigen::Index n = a.rows();
  const Matrix op = kronecker_operator(a);
  Eigen::PartialPivLU<Matrix> lu(op);
  if (!(lu.rcond() > 1e-14)) {
    throw Error(Errc::SingularSystem, "solve_lyapunov: Kronecker system is numerically singular");
  }
  const Vector rhs = -Eigen::Map<const Vector>(q.data(), n * n);
  Vector vec_p = lu.solve(rhs);
  vec_p += lu.solve(rhs - op * vec_p);

  Matrix p = Eigen::Map<Matrix>(vec_p.data(), n, n);
  p = 0.5 * (p + p.transpose()).eval();
  return p;
}

}  // namespace dmrac
