#include <cmath>
#include <numbers>

#include "dmrac/plant.hpp"

namespace dmrac::plant {

bool StateBox::contains(const Vector& x) const {
  return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

Vector StateBox::clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

int controllability_rank(const Matrix& a, const Matrix& b) {
  const Eigen::Index n = a.rows();
  Matrix ctrb(n, n * b.cols());
  Matrix block = b;
  for (Eigen::Index i = 0; i < n; ++i) {
    ctrb.middleCols(i * b.cols(), b.cols()) = block;
    block = a * block;
  }
  // Column scaling keeps the rank test meaningful when A and B differ in scale.
  for (Eigen::Index c = 0; c < ctrb.cols(); ++c) {
    const double norm = ctrb.col(c).norm();
    if (norm > 0.0) ctrb.col(c) /= norm;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(ctrb);
  qr.setThreshold(1e-10);
  return static_cast<int>(qr.rank());
}

PlantModel::PlantModel(Matrix a, Matrix b, StateBox domain, std::string name)
    : a_(std::move(a)), b_(std::move(b)), domain_(std::move(domain)), name_(std::move(name)) {
  require_finite(a_, "plant A");
  require_finite(b_, "plant B");
  if (a_.rows() != a_.cols() || b_.rows() != a_.rows()) {
    throw Error(Errc::InvalidArgument, "PlantModel: A must be n x n and B n x m");
  }
  if (domain_.lower.size() != a_.rows() || domain_.upper.size() != a_.rows() ||
      !(domain_.lower.array() < domain_.upper.array()).all()) {
    throw Error(Errc::InvalidArgument, "PlantModel: state box must have lower < upper per dimension");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(b_);
  if (qr.rank() != b_.cols()) throw Error(Errc::InvalidArgument, "PlantModel: B must have full column rank");
  if (controllability_rank(a_, b_) != a_.rows()) {
    throw Error(Errc::NotControllable, "PlantModel: (A, B) is not controllable");
  }
}

RefModel::RefModel(Matrix a_rm, Matrix b_rm) : a_(std::move(a_rm)), b_(std::move(b_rm)) {
  require_finite(a_, "A_rm");
  require_finite(b_, "B_rm");
  if (a_.rows() != a_.cols() || b_.rows() != a_.rows()) {
    throw Error(Errc::InvalidArgument, "RefModel: A_rm must be n x n and B_rm n x r");
  }
  if (!is_hurwitz(a_)) throw Error(Errc::NotHurwitz, "RefModel: A_rm is not Hurwitz");
}

Vector plant_step(const PlantModel& p, const Vector& delta, const Vector& x, const Vector& u, double t,
                  double dt) {
  if (!u.allFinite()) throw Error(Errc::NonFiniteState, "plant_step: non-finite input");
  const Vector forcing = p.b() * (u + delta);
  return rk4_step([&](double, const Vector& s) -> Vector { return p.a() * s + forcing; }, x, t, dt);
}

Vector plant_step(const PlantModel& p, Disturbance& d, const Vector& x, const Vector& u, const Vector& u_prev,
                  double t, double dt) {
  const Disturbance::Sample delta = d.eval(x, t, u_prev);
  return plant_step(p, delta.value, x, u, t, dt);
}

Vector ref_step(const RefModel& rm, const Vector& x_rm, const Vector& r, double dt) {
  const Vector forcing = rm.b() * r;
  return rk4_step([&](double, const Vector& s) -> Vector { return rm.a() * s + forcing; }, x_rm, 0.0, dt);
}

QuadPreset quad_attitude_preset() {
  constexpr int n = 6;
  constexpr int m = 3;
  constexpr double kStiffness = 32.0;  // s^2 + 8 s + 32: poles -4 +/- 4i
  constexpr double kDamping = 8.0;
  const double inertia[m] = {kRollInertia, kPitchInertia, kYawInertia};

  Matrix a = Matrix::Zero(n, n);
  Matrix b = Matrix::Zero(n, m);
  Matrix a_rm = Matrix::Zero(n, n);
  Matrix b_rm = Matrix::Zero(n, m);
  LinearGains gains{Matrix::Zero(m, n), Matrix::Zero(m, m)};
  for (int i = 0; i < m; ++i) {
    const double gain = kTorqueUnit / inertia[i];
    a(i, i + m) = 1.0;
    a(i + m, i + m) = -kRateDamping;
    b(i + m, i) = gain;
    a_rm(i, i + m) = 1.0;
    a_rm(i + m, i) = -kStiffness;
    a_rm(i + m, i + m) = -kDamping;
    b_rm(i + m, i) = kStiffness;
    gains.k(i, i) = kStiffness / gain;
    gains.k(i, i + m) = (kDamping - kRateDamping) / gain;
    gains.k_r(i, i) = kStiffness / gain;
  }

  const double angle = std::numbers::pi / 3.0;
  StateBox box{Vector(n), Vector(n)};
  box.lower << -angle, -angle, -angle, -20.0, -20.0, -20.0;
  box.upper = -box.lower;

  return QuadPreset{PlantModel(a, b, box, "quad_attitude"), RefModel(a_rm, b_rm), gains, Hover{1.0}};
}

}  // namespace dmrac::plant
