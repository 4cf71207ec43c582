#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dmrac/controllers.hpp"
#include "dmrac/link.hpp"
#include "dmrac/nn.hpp"
#include "dmrac/plant.hpp"
#include "dmrac/trainer.hpp"

namespace dmrac::harness {

enum class ControllerKind { Pid, Mrac, Dmrac };
const char* to_string(ControllerKind kind);
ControllerKind parse_controller(const std::string& name);

struct PidGains {
  double kp = 4.5;
  double ki = 2.0;
  double kd = 1.1;
  double clamp = 1.0;
};

/// Gaussian bank for shallow MRAC: `count` centers drawn uniformly from the box
/// [-angle_span, angle_span]^3 x [-rate_span, rate_span]^3 with a fixed seed,
/// so every scenario seed faces the same controller. With `from_disturbance`
/// the bank copies the first synthetic RBF term instead (exact features).
struct RbfBankConfig {
  int count = 24;
  double angle_span = 0.5;
  double rate_span = 2.0;
  double width = 1.0;
  std::uint64_t seed = 7;
  bool from_disturbance = false;
};

struct NetworkConfig {
  std::vector<int> hidden{64, 64};
  int feature_dim = 20;
  double dropout = 0.1;
  nn::Activation activation = nn::Activation::Tanh;
};

struct AdaptationConfig {
  double gamma_mrac = 800.0;
  double gamma_dmrac = 800.0;
  double w_bound = 50.0;
  double eps_proj = 0.1;
  double q_scale = 1.0;  // Q = q_scale * I
};

struct LinkConfig {
  link::ChannelModel uplink;    // telemetry to the trainer
  link::ChannelModel downlink;  // feature updates to the fast loop
  int telemetry_stride = 4;     // emit telemetry every this many ticks
};

struct SocketConfig {
  std::string host = "127.0.0.1";
  std::uint16_t fast_port = 47100;     // fast loop receives feature updates here
  std::uint16_t trainer_port = 47101;  // trainer receives telemetry here
};

struct CrashBounds {
  double angle = 1.0471975511965976;  // 60 degrees
  double rate = 20.0;
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string preset = "quad_attitude";
  ControllerKind controller = ControllerKind::Dmrac;
  double duration = 60.0;
  double rate_hz = 200.0;
  std::uint64_t seed = 0;
  plant::ReferenceSignal reference = plant::Hover{1.0};
  plant::DisturbanceSpec disturbance;
  // Campaigns redraw every rotor-fault onset uniformly from this window.
  std::optional<std::pair<double, double>> fault_window;
  AdaptationConfig adaptation;
  PidGains pid;
  RbfBankConfig rbf;
  NetworkConfig network;
  trainer::TrainerConfig trainer;
  LinkConfig link;
  SocketConfig socket;
  std::optional<double> saturation;
  std::optional<std::string> warm_start;
  // In-memory alternative to `warm_start`, takes precedence over the path.
  std::shared_ptr<const nn::MlpParams> warm_params;
  bool freeze_learning = false;
  CrashBounds crash;
  double final_window = 10.0;
  bool record_trajectory = true;

  std::int64_t tick_count() const;
  double dt() const { return 1.0 / rate_hz; }
  void validate() const;
};

/// JSON scenario description; unknown keys are rejected with ConfigError.
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Everything the fast loop knows at the end of one tick.
struct TickView {
  std::int64_t tick;  // index of the completed step, starting at 0
  double t;           // time after the step
  const Vector& x;
  const Vector& x_rm;
  const Vector& r;
  const Vector& u;
  const Vector& nu_ad;  // W^T Phi(x) with the updated W
  const Vector& delta;  // disturbance applied during the step
  const Vector& phi;    // features at x
  const control::FastAdaptState* fast;
};

using TickObserver = std::function<void(const TickView&)>;

struct RunMetrics {
  Vector rmse_axis;        // per attitude axis, full run
  Vector rmse_axis_final;  // per attitude axis, final window
  double rmse = 0.0;       // scalar attitude RMSE over ticks and axes
  double rmse_final = 0.0;
  double e_rms_final = 0.0;  // RMS of ||e|| over the final window
  double peak_e = 0.0;
  bool crashed = false;
  double crash_time = 0.0;
  std::int64_t ticks = 0;
  double max_w_norm = 0.0;
  std::uint64_t swaps = 0;
  std::uint64_t stale_updates = 0;
  std::uint64_t admissions = 0;
  std::uint64_t publishes = 0;
  std::uint64_t telemetry_sent = 0;
  std::uint64_t decode_errors = 0;
  double tick_p99_ms = 0.0;  // wall-clock tick duration, socket mode only
};

struct TrajectoryRow {
  std::int64_t tick;
  double t;
  Vector x, x_rm, r, u, nu_ad, delta;
  double e_norm;
  double w_fro;
  std::uint32_t feat_version;
};

struct RunResult {
  RunMetrics metrics;
  std::vector<TrajectoryRow> trajectory;
  std::vector<trainer::RoundMetrics> rounds;
  // DMRAC only: the trainer's features with the output layer fitted to its
  // buffer, or the flown network when nothing was trained.
  std::optional<nn::MlpParams> network;
};

/// Runs one scenario. In socket mode the trainer runs as a child process
/// (`trainer_argv` spawns it) and ticks are paced by the wall clock.
RunResult run_scenario(const ScenarioConfig& cfg, const TickObserver& observer = {});
RunResult run_scenario_socket(const ScenarioConfig& cfg, const std::vector<std::string>& trainer_argv);

/// Serves the trainer side of a socket-mode run until Shutdown arrives.
void serve_trainer(const ScenarioConfig& cfg);

bool detect_crash(const Vector& x, const Vector& bounds);
Vector crash_limits(const CrashBounds& bounds, int n);

/// Network spec of the scenario (input n, output m).
nn::MlpSpec network_spec(const ScenarioConfig& cfg, int n, int m);

/// Replaces each rotor-fault onset with a draw from cfg.fault_window.
ScenarioConfig with_seed(const ScenarioConfig& cfg, std::uint64_t seed);

struct CampaignResult {
  std::vector<RunMetrics> runs;
  int crashes = 0;
  double mean_rmse_final = 0.0;  // over non-crashed runs; NaN when all crashed
  double var_rmse_final = 0.0;
};

CampaignResult run_campaign(const ScenarioConfig& cfg, int n_runs, std::uint64_t seed_base);

// --- Files ---------------------------------------------------------------------

void save_snapshot(const std::filesystem::path& path, const nn::MlpParams& params);
/// Loads and checks the shapes against `spec` (full network).
nn::MlpParams load_snapshot(const std::filesystem::path& path, const nn::MlpSpec& spec);

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows);
void write_campaign_csv(std::ostream& out, const CampaignResult& result);

/// Recomputes RMSE, peak ||e|| and crash status from a trajectory CSV.
RunMetrics replay_metrics(std::istream& in, int r_dim, double final_window);

// --- Feature analysis -------------------------------------------------------------

struct LabeledScenario {
  std::string label;
  ScenarioConfig cfg;
};

struct FeatureExport {
  std::vector<std::string> labels;  // one per sample
  Matrix features;                  // samples x k
  Matrix projected;                 // samples x 3
  Vector explained;
  double silhouette = 0.0;
};

/// States visited by a scenario, one every `stride` ticks (at least one).
Matrix sample_states(const ScenarioConfig& cfg, int stride);

/// Features of one shared network at the given labelled states, PCA to `dims`
/// components and the silhouette score of the labels in that space.
FeatureExport export_features(const std::vector<std::pair<std::string, Matrix>>& states, const nn::MlpSpec& spec,
                              const nn::MlpParams& network, int dims = 3);

/// Mean silhouette over all points (Euclidean); points in singleton clusters score 0.
double silhouette_score(const Matrix& points, const std::vector<std::string>& labels);

void write_features_csv(std::ostream& out, const std::vector<std::string>& labels, const Matrix& values,
                        const std::string& prefix);

}  // namespace dmrac::harness
