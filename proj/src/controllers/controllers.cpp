#include <cmath>

#include "dmrac/controllers.hpp"
#include "dmrac/overloaded.hpp"

namespace dmrac {

Vector rbf_features(const Matrix& centers, const Vector& widths, const Vector& x, bool bias_feature) {
  if (centers.cols() != x.size() || widths.size() != centers.rows()) {
    throw Error(Errc::InvalidArgument, "rbf_features: shape mismatch");
  }
  const Eigen::Index count = centers.rows();
  Vector phi(count + (bias_feature ? 1 : 0));
  for (Eigen::Index i = 0; i < count; ++i) {
    const double w = widths(i);
    if (!(w > 0.0)) throw Error(Errc::InvalidArgument, "rbf_features: widths must be positive");
    phi(i) = std::exp(-(x - centers.row(i).transpose()).squaredNorm() / (2.0 * w * w));
  }
  if (bias_feature) phi(count) = 1.0;
  return phi;
}

namespace control {

Vector FeatureNetwork::eval(const Vector& x) const {
  Vector core = nn::inner_features(spec, inner, x);
  if (!bias_feature) return core;
  Vector phi(core.size() + 1);
  phi << core, 1.0;
  return phi;
}

Vector FastAdaptState::phi(const Vector& x) const {
  return std::visit(Overloaded{
                        [&](const RbfBank& bank) { return bank.eval(x); },
                        [&](const FeatureSnapshot& net) { return net->eval(x); },
                    },
                    features);
}

int FastAdaptState::feature_dim() const {
  return std::visit(Overloaded{
                        [](const RbfBank& bank) { return bank.dim(); },
                        [](const FeatureSnapshot& net) { return net->dim(); },
                    },
                    features);
}

std::uint32_t FastAdaptState::feature_version() const {
  if (const auto* net = std::get_if<FeatureSnapshot>(&features)) return (*net)->version();
  return 0;
}

FastAdaptState make_fast_state(FeatureSource features, double gamma, const Matrix& a_rm, const Matrix& q,
                               const Matrix& b, int m, double w_bound, double eps_proj) {
  if (!(gamma > 0.0) || !(w_bound > 0.0) || !(eps_proj > 0.0)) {
    throw Error(Errc::InvalidArgument, "make_fast_state: gamma, W_b and eps_proj must be positive");
  }
  FastAdaptState fast;
  fast.features = std::move(features);
  const int k = fast.feature_dim();
  fast.w = Matrix::Zero(k, m);
  fast.gamma = gamma * Matrix::Identity(k, k);
  fast.p = solve_lyapunov(a_rm, q);
  fast.b_proj = b;
  fast.w_bound = w_bound;
  fast.eps_proj = eps_proj;
  return fast;
}

Vector baseline_control(const LinearGains& g, const Vector& x, const Vector& r) { return -g.k * x + g.k_r * r; }

Vector adaptive_term(const Matrix& w, const Vector& phi) {
  if (w.rows() != phi.size()) throw Error(Errc::InvalidArgument, "adaptive_term: W rows must equal feature size");
  return w.transpose() * phi;
}

Matrix project(const Matrix& w, const Matrix& z, const Matrix& gamma, double w_bound, double eps) {
  const double norm2 = w.squaredNorm();
  const double inner2 = w_bound * w_bound;
  if (norm2 <= inner2) return z;
  const double outward = (w.transpose() * z).trace();
  if (outward <= 0.0) return z;
  const double layer = ((1.0 + eps) * (1.0 + eps) - 1.0) * inner2;
  const double f = std::min(1.0, (norm2 - inner2) / layer);
  const Matrix gw = gamma * w;
  const double metric = (w.transpose() * gw).trace();
  return z - (f * outward / metric) * gw;
}

void proj_update(FastAdaptState& fast, const Vector& phi, const Vector& e, double dt) {
  if (!(dt > 0.0)) throw Error(Errc::InvalidArgument, "proj_update: dt must be positive");
  // e = x_rm - x, so the descent direction on e^T P e is -Phi e^T P B.
  const Matrix y = -phi * (e.transpose() * fast.p * fast.b_proj);
  const Matrix z = fast.gamma * y;
  fast.w += dt * project(fast.w, z, fast.gamma, fast.w_bound, fast.eps_proj);
  const double limit = fast.max_norm();
  const double norm = fast.w.norm();
  // Rescaling can land a few ulps outside the ball; aim just inside it.
  if (norm > limit) fast.w *= limit * (1.0 - 1e-14) / norm;
}

PidState PidState::uniform(int m, double kp, double ki, double kd, double clamp) {
  PidState pid;
  pid.kp = Vector::Constant(m, kp);
  pid.ki = Vector::Constant(m, ki);
  pid.kd = Vector::Constant(m, kd);
  pid.clamp = clamp;
  pid.integrator = Vector::Zero(m);
  pid.prev_error = Vector::Zero(m);
  return pid;
}

Vector pid_control(PidState& pid, const Vector& err, double dt) {
  if (!(dt > 0.0)) throw Error(Errc::InvalidArgument, "pid_control: dt must be positive");
  if (pid.integrator.size() != err.size()) pid.integrator = Vector::Zero(err.size());
  pid.integrator = (pid.integrator + dt * err).cwiseMax(-pid.clamp).cwiseMin(pid.clamp);
  const Vector derivative = pid.has_prev ? Vector((err - pid.prev_error) / dt) : Vector::Zero(err.size());
  pid.prev_error = err;
  pid.has_prev = true;
  return pid.kp.cwiseProduct(err) + pid.ki.cwiseProduct(pid.integrator) + pid.kd.cwiseProduct(derivative);
}

SwapOutcome swap_features(FastAdaptState& fast, FeatureSnapshot snapshot) {
  auto* current = std::get_if<FeatureSnapshot>(&fast.features);
  if (current == nullptr) throw Error(Errc::InvalidArgument, "swap_features: fast state uses a fixed RBF bank");
  if (!snapshot || snapshot->dim() != fast.feature_dim()) {
    throw Error(Errc::ShapeMismatch, "swap_features: feature dimension changed");
  }
  if (snapshot->version() <= (*current)->version()) {
    ++fast.stale_updates;
    return SwapOutcome::Stale;
  }
  *current = std::move(snapshot);
  ++fast.swaps;
  return SwapOutcome::Installed;
}

ControlOutput total_control(const LinearGains& g, const FastAdaptState* fast, PidState* pid, const Vector& x,
                            const Vector& r, const Vector& phi, double dt, std::optional<double> saturation) {
  if (fast != nullptr && pid != nullptr) {
    throw Error(Errc::InvalidArgument, "total_control: adaptive and PID modes are exclusive");
  }
  ControlOutput out;
  const Eigen::Index m = g.k.rows();
  if (pid != nullptr) {
    out.u = pid_control(*pid, r - x.head(r.size()), dt);
    out.nu_ad = Vector::Zero(m);
  } else if (fast != nullptr) {
    out.nu_ad = adaptive_term(fast->w, phi);
    out.u = baseline_control(g, x, r) - out.nu_ad;
  } else {
    out.u = baseline_control(g, x, r);
    out.nu_ad = Vector::Zero(m);
  }
  if (saturation) out.u = out.u.cwiseMax(-*saturation).cwiseMin(*saturation);
  return out;
}

}  // namespace control
}  // namespace dmrac
