#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <variant>

#include "dmrac/core_math.hpp"
#include "dmrac/nn.hpp"
#include "dmrac/plant.hpp"
#include "dmrac/rbf.hpp"

namespace dmrac::control {

using plant::LinearGains;

/// Fixed Gaussian bank used by shallow MRAC.
struct RbfBank {
  Matrix centers;  // count x n
  Vector widths;
  bool bias_feature = true;

  int dim() const { return static_cast<int>(centers.rows()) + (bias_feature ? 1 : 0); }
  Vector eval(const Vector& x) const { return rbf_features(centers, widths, x, bias_feature); }
};

/// Immutable feature-network snapshot installed in the fast loop. The constant
/// element appended when `bias_feature` is set pairs with the output-layer bias.
struct FeatureNetwork {
  nn::MlpSpec spec;
  nn::MlpParams inner;
  bool bias_feature = true;

  std::uint32_t version() const { return inner.version; }
  int dim() const { return spec.feature_dim() + (bias_feature ? 1 : 0); }
  Vector eval(const Vector& x) const;
};

using FeatureSnapshot = std::shared_ptr<const FeatureNetwork>;
using FeatureSource = std::variant<RbfBank, FeatureSnapshot>;

/// Output-layer weights adapted at the fast rate, plus everything the update law needs.
struct FastAdaptState {
  Matrix w;          // features x m
  Matrix gamma;      // features x features, positive-definite
  Matrix p;          // Lyapunov solution, n x n
  Matrix b_proj;     // n x m input matrix in the update law
  double w_bound = 50.0;
  double eps_proj = 0.1;
  FeatureSource features;
  std::uint64_t swaps = 0;
  std::uint64_t stale_updates = 0;

  Vector phi(const Vector& x) const;
  int feature_dim() const;
  std::uint32_t feature_version() const;
  double max_norm() const { return w_bound * (1.0 + eps_proj); }
};

/// W = 0, Gamma = gamma * I, P from A_rm^T P + P A_rm + Q = 0.
FastAdaptState make_fast_state(FeatureSource features, double gamma, const Matrix& a_rm, const Matrix& q,
                               const Matrix& b, int m, double w_bound = 50.0, double eps_proj = 0.1);

Vector baseline_control(const LinearGains& g, const Vector& x, const Vector& r);

/// nu_ad = W^T Phi.
Vector adaptive_term(const Matrix& w, const Vector& phi);

/// Smooth projection of the Gamma-scaled update `z` for weights `w`: identity
/// inside the ball ||W||_F <= W_b or when the update points inward; otherwise
/// the outward radial component is removed in proportion to how far W sits
/// into the boundary layer [W_b, W_b (1 + eps)].
Matrix project(const Matrix& w, const Matrix& z, const Matrix& gamma, double w_bound, double eps);

/// One Euler step of W' = Gamma proj(W, -Phi e^T P B) with e = x_rm - x.
/// The result never leaves the ball of radius W_b (1 + eps).
void proj_update(FastAdaptState& fast, const Vector& phi, const Vector& e, double dt);

struct PidState {
  Vector kp, ki, kd;
  double clamp = 1.0;      // |integrator| bound per axis
  Vector integrator;
  Vector prev_error;
  bool has_prev = false;

  static PidState uniform(int m, double kp, double ki, double kd, double clamp);
};

/// kp e + ki int(e) + kd de/dt with a backward-difference derivative.
Vector pid_control(PidState& pid, const Vector& err, double dt);

enum class SwapOutcome { Installed, Stale };

/// Installs a newer feature snapshot; W is retained. Older or equal versions
/// are discarded and counted in `stale_updates`.
SwapOutcome swap_features(FastAdaptState& fast, FeatureSnapshot snapshot);

struct ControlOutput {
  Vector u;
  Vector nu_ad;
};

/// PID mode when `pid` is set, adaptive mode (baseline - W^T Phi) when `fast`
/// is set, pure baseline when neither. PID errors are r_i - x_i on the first
/// r.size() states. A `saturation` limit clamps each channel to +/- limit.
ControlOutput total_control(const LinearGains& g, const FastAdaptState* fast, PidState* pid, const Vector& x,
                            const Vector& r, const Vector& phi, double dt,
                            std::optional<double> saturation = std::nullopt);

}  // namespace dmrac::control
