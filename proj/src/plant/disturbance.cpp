#include <cmath>

#include "dmrac/overloaded.hpp"
#include "dmrac/plant.hpp"
#include "dmrac/rbf.hpp"

namespace dmrac::plant {
namespace {

Vector sized_or_zero(const Vector& v, int m) { return v.size() == m ? v : Vector::Zero(m); }

}  // namespace

double wind_scale(WindLevel level) {
  switch (level) {
    case WindLevel::Low: return 1.0;
    case WindLevel::Medium: return 2.0;
    case WindLevel::High: return 4.0;
  }
  return 1.0;
}

Vector state_profile(const Vector& x, int m) {
  const Eigen::Index n = x.size();
  Vector g(m);
  for (int i = 0; i < m; ++i) {
    const double angle = x(i % n);
    const double rate = i + m < n ? x(i + m) : 0.0;
    g(i) = std::tanh(2.0 * angle) + 0.5 * std::tanh(rate);
  }
  return g;
}

Disturbance::Disturbance(DisturbanceSpec spec, int input_dim, double dt, std::optional<StateBox> domain)
    : spec_(std::move(spec)), m_(input_dim), dt_(dt), domain_(std::move(domain)) {
  if (m_ < 1 || !(dt_ > 0.0)) throw Error(Errc::InvalidArgument, "Disturbance: need m >= 1 and dt > 0");
  for (const auto& term : spec_) {
    OuState state{Vector::Zero(m_), std::mt19937_64(0)};
    std::visit(Overloaded{
                   [&](const SyntheticRbf& s) {
                     if (s.weights.cols() != m_ ||
                         s.weights.rows() != s.centers.rows() + (s.bias_feature ? 1 : 0) ||
                         s.widths.size() != s.centers.rows() || (s.widths.array() <= 0.0).any()) {
                       throw Error(Errc::InvalidArgument, "SyntheticRbf: inconsistent shapes or widths");
                     }
                   },
                   [&](const WindBias& w) {
                     if (w.bias.size() != m_) throw Error(Errc::InvalidArgument, "WindBias: bias must be m-vector");
                   },
                   [&](const Cloth& c) {
                     if (c.reversion < 0.0 || c.volatility < 0.0) {
                       throw Error(Errc::InvalidArgument, "Cloth: reversion and volatility must be non-negative");
                     }
                     state.torque = sized_or_zero(c.initial, m_);
                     state.rng.seed(c.seed);
                   },
                   [&](const RotorFault& f) {
                     if (!(f.effectiveness > 0.0 && f.effectiveness <= 1.0) || f.bias.size() != m_) {
                       throw Error(Errc::InvalidArgument, "RotorFault: effectiveness in (0, 1] and m-vector bias");
                     }
                   },
               },
               term);
    ou_.push_back(std::move(state));
  }
}

Disturbance::Sample Disturbance::eval(const Vector& x_in, double t, const Vector& u_prev) {
  Sample out{Vector::Zero(m_), false};
  Vector x = x_in;
  if (domain_ && !domain_->contains(x)) {
    x = domain_->clamp(x);
    out.clamped = true;
  }
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    std::visit(Overloaded{
                   [&](const SyntheticRbf& s) {
                     out.value += s.weights.transpose() * rbf_features(s.centers, s.widths, x, s.bias_feature);
                   },
                   [&](const WindBias& w) {
                     out.value += wind_scale(w.level) * (w.bias + w.coupling * state_profile(x, m_));
                   },
                   [&](const Cloth& c) {
                     OuState& ou = ou_[i];
                     out.value += ou.torque + c.coupling * state_profile(x, m_);
                     const Vector mean = sized_or_zero(c.mean, m_);
                     std::normal_distribution<double> normal(0.0, 1.0);
                     double decay = 1.0;
                     double spread = c.volatility * std::sqrt(dt_);
                     if (c.reversion > 0.0) {
                       decay = std::exp(-c.reversion * dt_);
                       spread = c.volatility * std::sqrt((1.0 - decay * decay) / (2.0 * c.reversion));
                     }
                     for (int j = 0; j < m_; ++j) {
                       const double noise = spread > 0.0 ? spread * normal(ou.rng) : 0.0;
                       ou.torque(j) = mean(j) + (ou.torque(j) - mean(j)) * decay + noise;
                     }
                   },
                   [&](const RotorFault& f) {
                     if (t < f.t_fault) return;
                     const Vector u = u_prev.size() == m_ ? u_prev : Vector::Zero(m_);
                     out.value += f.bias + (f.effectiveness - 1.0) * u;
                   },
               },
               spec_[i]);
  }
  return out;
}

}  // namespace dmrac::plant
