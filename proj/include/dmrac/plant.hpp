#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dmrac/core_math.hpp"

namespace dmrac::plant {

/// Axis-aligned state domain D_x.
struct StateBox {
  Vector lower;
  Vector upper;

  bool contains(const Vector& x) const;
  Vector clamp(const Vector& x) const;
};

/// x' = A x + B (u + Delta(x)). (A, B) must be controllable and B full column rank.
class PlantModel {
 public:
  PlantModel(Matrix a, Matrix b, StateBox domain, std::string name);

  const Matrix& a() const { return a_; }
  const Matrix& b() const { return b_; }
  const StateBox& domain() const { return domain_; }
  const std::string& name() const { return name_; }
  int state_dim() const { return static_cast<int>(a_.rows()); }
  int input_dim() const { return static_cast<int>(b_.cols()); }

 private:
  Matrix a_;
  Matrix b_;
  StateBox domain_;
  std::string name_;
};

/// x_rm' = A_rm x_rm + B_rm r with A_rm Hurwitz.
class RefModel {
 public:
  RefModel(Matrix a_rm, Matrix b_rm);

  const Matrix& a() const { return a_; }
  const Matrix& b() const { return b_; }
  int command_dim() const { return static_cast<int>(b_.cols()); }

 private:
  Matrix a_;
  Matrix b_;
};

/// Baseline gains: u_lin = -K x + K_r r, with A - B K = A_rm and B K_r = B_rm.
struct LinearGains {
  Matrix k;    // m x n
  Matrix k_r;  // m x r
};

int controllability_rank(const Matrix& a, const Matrix& b);

// --- Disturbance library (Delta(x), matched through B) ----------------------

enum class WindLevel { Low, Medium, High };
double wind_scale(WindLevel level);

/// Delta = W*^T sigma(x) with Gaussian RBFs; W* is known, so the ideal
/// weights for a controller sharing this bank are available for diagnostics.
struct SyntheticRbf {
  Matrix weights;   // rows = centers (+1 when bias_feature), cols = m
  Matrix centers;   // count x n
  Vector widths;    // count
  bool bias_feature = false;
};

/// Delta = s * (bias + coupling * profile(x)), s = 1/2/4 for low/med/high.
struct WindBias {
  WindLevel level = WindLevel::Low;
  Vector bias;
  double coupling = 0.0;
};

/// Ornstein-Uhlenbeck torque plus coupling * profile(x).
struct Cloth {
  std::uint64_t seed = 0;
  double reversion = 1.0;   // kappa, 1/s
  double volatility = 0.0;  // sigma, torque / sqrt(s)
  double coupling = 0.0;
  Vector mean;              // defaults to zero
  Vector initial;           // OU state at t = 0, defaults to zero
};

/// Zero before t_fault; afterwards bias + (effectiveness - 1) * u_prev.
struct RotorFault {
  double t_fault = 0.0;
  double effectiveness = 1.0;
  Vector bias;
};

using DisturbanceTerm = std::variant<SyntheticRbf, WindBias, Cloth, RotorFault>;
using DisturbanceSpec = std::vector<DisturbanceTerm>;  // empty: no disturbance

/// Smooth, bounded state-coupling shape shared by the wind and cloth models.
Vector state_profile(const Vector& x, int m);

/// Stateful evaluator for a composed disturbance. Cloth terms advance their OU
/// state by `dt` on every call, so `eval` is called exactly once per step.
class Disturbance {
 public:
  struct Sample {
    Vector value;
    bool clamped = false;  // x was outside D_x and was clamped before evaluation
  };

  Disturbance(DisturbanceSpec spec, int input_dim, double dt, std::optional<StateBox> domain = std::nullopt);

  Sample eval(const Vector& x, double t, const Vector& u_prev);
  const DisturbanceSpec& spec() const { return spec_; }
  int input_dim() const { return m_; }

 private:
  struct OuState {
    Vector torque;
    std::mt19937_64 rng;
  };

  DisturbanceSpec spec_;
  int m_;
  double dt_;
  std::optional<StateBox> domain_;
  std::vector<OuState> ou_;  // one per term; unused for non-cloth terms
};

/// x_next for x' = A x + B (u + delta) with u and delta held over the step (RK4).
Vector plant_step(const PlantModel& p, const Vector& delta, const Vector& x, const Vector& u, double t, double dt);

/// Samples the disturbance at step start, then integrates.
Vector plant_step(const PlantModel& p, Disturbance& d, const Vector& x, const Vector& u, const Vector& u_prev,
                  double t, double dt);

Vector ref_step(const RefModel& rm, const Vector& x_rm, const Vector& r, double dt);

// --- Reference commands ------------------------------------------------------

struct Hover {
  double height = 1.0;
};
struct Circle {
  double radius = 1.0;
  double period = 8.0;
  double height = 1.0;
};
struct FigureEight {
  double scale = 1.5;
  double period = 10.0;
  double height = 1.0;
};
/// Direct attitude-command step on one axis (no position trajectory).
struct Step {
  double time = 0.0;
  double level = 0.0;
  int axis = 0;
};

using ReferenceSignal = std::variant<Hover, Circle, FigureEight, Step>;

struct ReferenceSample {
  Vector position;  // x, y, z in metres
  Vector command;   // roll, pitch, yaw attitude command in radians
};

inline constexpr double kGravity = 9.81;

/// Position trajectory and the attitude command produced by the fixed
/// small-angle outer loop: roll = -a_y / g, pitch = a_x / g, yaw = 0, where a
/// is the commanded acceleration of the position trajectory.
ReferenceSample reference_signal(const ReferenceSignal& sig, double t);

// --- Quadrotor attitude preset ------------------------------------------------

/// State [roll, pitch, yaw, p, q, r]; inputs are body torques in mN*m.
struct QuadPreset {
  PlantModel plant;
  RefModel ref;
  LinearGains gains;
  ReferenceSignal reference;
};

inline constexpr double kRollInertia = 1.4e-4;   // kg m^2
inline constexpr double kPitchInertia = 1.4e-4;
inline constexpr double kYawInertia = 2.2e-4;
inline constexpr double kRateDamping = 0.1;      // 1/s
inline constexpr double kTorqueUnit = 1e-3;      // controller torque unit in N*m

QuadPreset quad_attitude_preset();

}  // namespace dmrac::plant
