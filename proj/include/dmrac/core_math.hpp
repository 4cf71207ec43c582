#pragma once

#include <complex>
#include <concepts>
#include <vector>

#include <Eigen/Dense>

#include "dmrac/error.hpp"

namespace dmrac {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

bool all_finite(const Matrix& m);
/// Throws InvalidArgument naming `what` when `m` is empty or holds NaN/Inf.
void require_finite(const Matrix& m, const char* what);

std::vector<std::complex<double>> eigenvalues(const Matrix& a);

/// True when every eigenvalue has real part below -tol.
bool is_hurwitz(const Matrix& a, double tol = 1e-9);

/// Solves A^T P + P A + Q = 0 for symmetric positive-definite P.
///
/// The system is vectorized as (I kron A^T + A^T kron I) vec(P) = -vec(Q) and
/// solved with a dense LU factorization followed by one refinement pass.
/// Throws NotHurwitz when A is not Hurwitz and SingularSystem when the
/// Kronecker operator is numerically singular.
Matrix solve_lyapunov(const Matrix& a, const Matrix& q);

/// Frobenius norm of A^T P + P A + Q.
double lyapunov_residual(const Matrix& a, const Matrix& p, const Matrix& q);

/// Classical fourth-order Runge-Kutta step of x' = f(t, x).
/// Throws NonFiniteState if any stage evaluation is not finite.
template <typename F>
  requires std::invocable<F&, double, const Vector&>
Vector rk4_step(F&& f, const Vector& x, double t, double dt) {
  if (!(dt > 0.0)) throw Error(Errc::InvalidArgument, "rk4_step: dt must be positive");
  auto stage = [&](double ts, const Vector& xs) {
    Vector k = f(ts, xs);
    if (!k.allFinite()) throw Error(Errc::NonFiniteState, "rk4_step: non-finite stage");
    return k;
  };
  const double half = 0.5 * dt;
  const Vector k1 = stage(t, x);
  const Vector k2 = stage(t + half, x + half * k1);
  const Vector k3 = stage(t + half, x + half * k2);
  const Vector k4 = stage(t + dt, x + dt * k3);
  Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw Error(Errc::NonFiniteState, "rk4_step: non-finite state");
  return next;
}

/// Singular values of M in descending order, computed by one-sided (Hestenes)
/// Jacobi rotations. Returns min(rows, cols) values.
Vector singular_values(const Matrix& m);

/// Smallest of the min(rows, cols) singular values of M; 0 for a zero matrix.
double min_singular_value(const Matrix& m);

struct PcaResult {
  Matrix projected;          // one row per input point, `components` columns
  Vector explained_ratio;    // non-increasing, sums to at most 1
  Matrix directions;         // k x components, unit columns
  Vector mean;
  int components = 0;
  bool degenerate = false;   // fewer than d usable directions were available
};

/// Centers `points` (one point per row) and projects them onto the top-d
/// principal directions. When the covariance rank is below d, or there are
/// not enough points, only the available directions are returned and
/// `degenerate` is set.
PcaResult pca_project(const Matrix& points, int d);

}  // namespace dmrac
