#include <doctest.h>

#include <cmath>
#include <random>

#include "dmrac/core_math.hpp"
#include "oracles.hpp"

using namespace dmrac;

TEST_CASE("lyapunov: scalar and 2x2 closed forms") {
  Matrix a(1, 1), q(1, 1);
  a << -1.0;
  q << 2.0;
  CHECK(solve_lyapunov(a, q)(0, 0) == doctest::Approx(1.0).epsilon(1e-14));

  Matrix a2(2, 2);
  a2 << 0.0, 1.0, -2.0, -3.0;
  const Matrix q2 = Matrix::Identity(2, 2);
  const Matrix p = solve_lyapunov(a2, q2);
  const Matrix expect = oracle::lyapunov_symmetric(a2, q2);
  CHECK((p - expect).norm() < 1e-12);
  CHECK(p(0, 0) == doctest::Approx(1.25));
  CHECK(p(0, 1) == doctest::Approx(0.25));
  CHECK(p(1, 1) == doctest::Approx(0.25));
  CHECK(lyapunov_residual(a2, p, q2) < 1e-12);
}

TEST_CASE("lyapunov: unstable input is rejected") {
  Matrix a(1, 1), q(1, 1);
  a << 1.0;
  q << 1.0;
  try {
    solve_lyapunov(a, q);
    FAIL("expected NotHurwitz");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotHurwitz);
  }
}

TEST_CASE("lyapunov: random Hurwitz systems match the symmetric-unknowns oracle") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + trial % 8;
    const Matrix a = oracle::random_hurwitz(n, rng);
    const Matrix q = Matrix::Identity(n, n);
    const Matrix p = solve_lyapunov(a, q);
    CHECK(lyapunov_residual(a, p, q) <= 1e-9 * q.norm());
    CHECK((p - oracle::lyapunov_symmetric(a, q)).norm() <= 1e-8 * p.norm());
    CHECK(oracle::symmetric_eigenvalues(p)(0) > 0.0);
  }
}

TEST_CASE("rk4: reference values") {
  auto decay = [](double, const Vector& x) -> Vector { return -x; };
  Vector x = Vector::Constant(1, 1.0);
  CHECK(rk4_step(decay, x, 0.0, 0.1)(0) == doctest::Approx(0.90483750).epsilon(1e-9));
  CHECK(std::abs(rk4_step(decay, x, 0.0, 0.1)(0) - std::exp(-0.1)) < 1e-7);

  auto zero = [](double, const Vector& v) -> Vector { return Vector::Zero(v.size()); };
  Vector y(3);
  y << 0.3, -2.0, 5.0;
  CHECK(rk4_step(zero, y, 1.0, 0.2) == y);

  auto one = [](double, const Vector& v) -> Vector { return Vector::Ones(v.size()); };
  CHECK(rk4_step(one, Vector::Zero(1), 0.0, 0.5)(0) == doctest::Approx(0.5));
}

TEST_CASE("rk4: non-finite stage raises NonFiniteState") {
  auto blow = [](double, const Vector& v) -> Vector { return v.array() / 0.0; };
  try {
    rk4_step(blow, Vector::Ones(2), 0.0, 0.1);
    FAIL("expected NonFiniteState");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFiniteState);
  }
}

TEST_CASE("rk4: fourth-order convergence on a linear system") {
  Matrix a(2, 2);
  a << 0.0, 1.0, -32.0, -8.0;
  auto f = [&](double, const Vector& v) -> Vector { return a * v; };
  Vector x0(2);
  x0 << 0.4, -1.0;
  const double horizon = 0.5;
  // Oracle: the exact solution through a diagonalization of A.
  Eigen::EigenSolver<Matrix> es(a);
  const Eigen::MatrixXcd v = es.eigenvectors();
  const Eigen::VectorXcd lam = es.eigenvalues();
  const Eigen::VectorXcd c = v.partialPivLu().solve(x0.cast<std::complex<double>>());
  Eigen::VectorXcd exact_c = v * (lam * horizon).array().exp().matrix().cwiseProduct(c);
  const Vector exact = exact_c.real();

  auto error_with = [&](int steps) {
    Vector x = x0;
    const double dt = horizon / steps;
    for (int i = 0; i < steps; ++i) x = rk4_step(f, x, i * dt, dt);
    return (x - exact).norm();
  };
  const double ratio = error_with(20) / error_with(40);
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("min_singular_value: simple matrices") {
  CHECK(min_singular_value(Matrix::Identity(3, 3)) == doctest::Approx(1.0));
  Matrix d(2, 2);
  d << 3.0, 0.0, 0.0, 4.0;
  CHECK(min_singular_value(d) == doctest::Approx(3.0));
  Matrix r(2, 2);
  r << 1.0, 1.0, 1.0, 1.0;
  CHECK(min_singular_value(r) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(min_singular_value(Matrix::Zero(3, 2)) == 0.0);
}

TEST_CASE("min_singular_value agrees with an independent Jacobi eigensolver") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + trial % 5;
    const int p = k + trial % 7;
    Matrix m(p, k);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < k; ++j) m(i, j) = g(rng);
    const double expect = oracle::min_singular_value(m);
    CHECK(min_singular_value(m) == doctest::Approx(expect).epsilon(1e-6));
    const Vector sv = singular_values(m);
    for (Eigen::Index i = 1; i < sv.size(); ++i) CHECK(sv(i) <= sv(i - 1));
  }
}

TEST_CASE("pca: line, isotropic cloud, degenerate input") {
  Matrix line(5, 3);
  for (int i = 0; i < 5; ++i) line.row(i) << i, 2.0 * i, -1.0 * i;
  const PcaResult one = pca_project(line, 1);
  CHECK(one.explained_ratio(0) == doctest::Approx(1.0));
  CHECK_FALSE(one.degenerate);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  const int k = 4;
  Matrix cloud(10000, k);
  for (int i = 0; i < cloud.rows(); ++i)
    for (int j = 0; j < k; ++j) cloud(i, j) = g(rng);
  const PcaResult iso = pca_project(cloud, 2);
  CHECK(iso.explained_ratio(0) == doctest::Approx(1.0 / k).epsilon(0.15));
  CHECK(iso.explained_ratio(1) == doctest::Approx(1.0 / k).epsilon(0.15));
  CHECK(iso.projected.rows() == cloud.rows());
  CHECK(iso.projected.cols() == 2);

  Matrix same(2, 3);
  same << 1.0, 2.0, 3.0, 1.0, 2.0, 3.0;
  const PcaResult dup = pca_project(same, 2);
  CHECK(dup.degenerate);
  CHECK(dup.components == 0);
}

TEST_CASE("hurwitz check and finiteness helpers") {
  Matrix a(2, 2);
  a << 0.0, 1.0, -2.0, -3.0;
  CHECK(is_hurwitz(a));
  a(1, 1) = 3.0;
  CHECK_FALSE(is_hurwitz(a));
  Matrix bad = Matrix::Zero(2, 2);
  bad(0, 1) = std::nan("");
  CHECK_FALSE(all_finite(bad));
  CHECK_THROWS_AS(require_finite(bad, "bad"), Error);
}
