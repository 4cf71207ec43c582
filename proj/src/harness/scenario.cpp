#include <spawn.h>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "dmrac/harness.hpp"
#include "dmrac/overloaded.hpp"
#include "seeds.hpp"

extern char** environ;

namespace dmrac::harness {
namespace {

using control::FastAdaptState;
using control::FeatureNetwork;
using control::FeatureSnapshot;

control::RbfBank make_rbf_bank(const ScenarioConfig& cfg, int n) {
  const RbfBankConfig& rc = cfg.rbf;
  if (rc.from_disturbance) {
    for (const auto& term : cfg.disturbance) {
      if (const auto* s = std::get_if<plant::SyntheticRbf>(&term)) {
        return control::RbfBank{s->centers, s->widths, s->bias_feature};
      }
    }
    throw Error(Errc::ConfigError, "rbf.from_disturbance needs a synthetic_rbf disturbance term");
  }
  std::mt19937_64 rng(rc.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix centers(rc.count, n);
  for (int i = 0; i < rc.count; ++i) {
    for (int j = 0; j < n; ++j) centers(i, j) = unit(rng) * (j < n / 2 ? rc.angle_span : rc.rate_span);
  }
  return control::RbfBank{centers, Vector::Constant(rc.count, rc.width), true};
}

// Output layer (m x k weights, m biases) as fast weights ((k + 1) x m).
Matrix output_layer_as_w(const nn::MlpParams& net) {
  const nn::DenseLayer& last = net.layers.back();
  Matrix w(last.weights.cols() + 1, last.weights.rows());
  w.topRows(last.weights.cols()) = last.weights.transpose();
  w.bottomRows(1) = last.bias.transpose();
  return w;
}

// The network the fast loop ends with: installed features and W as the output layer.
nn::MlpParams flown_network(const FastAdaptState& fast) {
  const auto& snapshot = std::get<control::FeatureSnapshot>(fast.features);
  nn::MlpParams net = snapshot->inner;
  const Eigen::Index k = snapshot->spec.feature_dim();
  net.layers.push_back(nn::DenseLayer{fast.w.topRows(k).transpose(), fast.w.row(k).transpose()});
  return net;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(idx, v.size() - 1)];
}

// Where the fast loop's messages go and come from.
struct LinkEnv {
  link::DatagramLink* to_trainer = nullptr;
  link::DatagramLink* from_trainer = nullptr;
  link::DatagramLink* trainer_inbox = nullptr;   // simulated mode: far end of to_trainer
  link::DatagramLink* trainer_outbox = nullptr;  // simulated mode: near end of from_trainer
  trainer::Trainer* trainer = nullptr;           // simulated mode only
  bool realtime = false;
};

struct Accumulator {
  Vector sq_axis;
  Vector sq_axis_final;
  double sq_e_final = 0.0;
  std::int64_t count = 0;
  std::int64_t count_final = 0;

  explicit Accumulator(int r_dim) : sq_axis(Vector::Zero(r_dim)), sq_axis_final(Vector::Zero(r_dim)) {}

  void add(const Vector& e, bool final_window) {
    const auto angles = e.head(sq_axis.size()).array().square().matrix();
    sq_axis += angles;
    ++count;
    if (final_window) {
      sq_axis_final += angles;
      sq_e_final += e.squaredNorm();
      ++count_final;
    }
  }

  void finish(RunMetrics& m) const {
    const double r = static_cast<double>(sq_axis.size());
    if (count > 0) {
      m.rmse_axis = (sq_axis / static_cast<double>(count)).cwiseSqrt();
      m.rmse = std::sqrt(sq_axis.sum() / (r * static_cast<double>(count)));
    } else {
      m.rmse_axis = Vector::Zero(sq_axis.size());
    }
    if (count_final > 0) {
      m.rmse_axis_final = (sq_axis_final / static_cast<double>(count_final)).cwiseSqrt();
      m.rmse_final = std::sqrt(sq_axis_final.sum() / (r * static_cast<double>(count_final)));
      m.e_rms_final = std::sqrt(sq_e_final / static_cast<double>(count_final));
    } else {
      m.rmse_axis_final = Vector::Zero(sq_axis.size());
    }
  }
};

struct Prepared {
  plant::QuadPreset preset;
  nn::MlpSpec spec;
  std::optional<nn::MlpParams> network;  // full network for DMRAC
  std::optional<FastAdaptState> fast;
  std::optional<control::PidState> pid;
};

Prepared prepare(const ScenarioConfig& cfg) {
  cfg.validate();
  Prepared p{plant::quad_attitude_preset(), {}, std::nullopt, std::nullopt, std::nullopt};
  const int n = p.preset.plant.state_dim();
  const int m = p.preset.plant.input_dim();
  const Matrix q = cfg.adaptation.q_scale * Matrix::Identity(n, n);
  const AdaptationConfig& ad = cfg.adaptation;

  switch (cfg.controller) {
    case ControllerKind::Pid:
      p.pid = control::PidState::uniform(m, cfg.pid.kp, cfg.pid.ki, cfg.pid.kd, cfg.pid.clamp);
      break;
    case ControllerKind::Mrac:
      p.fast = control::make_fast_state(make_rbf_bank(cfg, n), ad.gamma_mrac, p.preset.ref.a(), q,
                                        p.preset.plant.b(), m, ad.w_bound, ad.eps_proj);
      break;
    case ControllerKind::Dmrac: {
      p.spec = network_spec(cfg, n, m);
      if (cfg.warm_params) {
        if (!cfg.warm_params->matches(p.spec)) throw Error(Errc::ShapeMismatch, "warm-start network shape");
        p.network = *cfg.warm_params;
      } else if (cfg.warm_start) {
        p.network = load_snapshot(*cfg.warm_start, p.spec);
      } else {
        // A cold network's output layer starts where the fast weights start.
        p.network = nn::init(p.spec);
        p.network->layers.back().weights.setZero();
        p.network->layers.back().bias.setZero();
      }
      auto snapshot = std::make_shared<const FeatureNetwork>(FeatureNetwork{p.spec, p.network->inner(), true});
      p.fast = control::make_fast_state(snapshot, ad.gamma_dmrac, p.preset.ref.a(), q, p.preset.plant.b(), m,
                                        ad.w_bound, ad.eps_proj);
      if (cfg.warm_params || cfg.warm_start) {
        p.fast->w = output_layer_as_w(*p.network);
        const double norm = p.fast->w.norm();
        if (norm > p.fast->max_norm()) p.fast->w *= p.fast->max_norm() / norm;
      }
      break;
    }
  }
  return p;
}

RunResult fast_loop(const ScenarioConfig& cfg, Prepared& p, LinkEnv& env, const TickObserver& observer) {
  const plant::PlantModel& plant = p.preset.plant;
  const plant::RefModel& ref = p.preset.ref;
  const int n = plant.state_dim();
  const int m = plant.input_dim();
  const int r_dim = ref.command_dim();
  const double dt = cfg.dt();
  const std::int64_t ticks = cfg.tick_count();
  const Vector bounds = crash_limits(cfg.crash, n);
  const double final_start = cfg.duration - cfg.final_window;

  FastAdaptState* fast = p.fast ? &*p.fast : nullptr;
  control::PidState* pid = p.pid ? &*p.pid : nullptr;
  const bool learning = fast != nullptr && !cfg.freeze_learning;
  // Telemetry carries the network features without the constant element.
  const int k_net = cfg.controller == ControllerKind::Dmrac ? cfg.network.feature_dim : 0;
  const link::Dims dims{n, m, k_net};

  plant::DisturbanceSpec dist_spec = cfg.disturbance;
  for (std::size_t i = 0; i < dist_spec.size(); ++i) {
    if (auto* c = std::get_if<plant::Cloth>(&dist_spec[i])) c->seed = derive_seed(cfg.seed, kSaltCloth + i) ^ c->seed;
  }
  plant::Disturbance disturbance(dist_spec, m, dt, plant.domain());

  RunResult result;
  RunMetrics& metrics = result.metrics;
  Accumulator acc(r_dim);
  Vector x = Vector::Zero(n);
  Vector x_rm = Vector::Zero(n);
  Vector u_prev = Vector::Zero(m);
  Vector phi = fast ? fast->phi(x) : Vector();
  Vector nu_post = Vector::Zero(m);
  std::uint32_t telemetry_seq = 0;
  std::vector<double> tick_ms;

  const auto wall_start = std::chrono::steady_clock::now();
  for (std::int64_t k = 0; k < ticks; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double t1 = static_cast<double>(k + 1) * dt;
    if (env.realtime) std::this_thread::sleep_until(wall_start + std::chrono::duration<double>(t));
    const auto tick_begin = std::chrono::steady_clock::now();

    if (env.from_trainer != nullptr && fast != nullptr) {
      for (const link::Frame& frame : env.from_trainer->receive(t)) {
        const link::DecodeResult decoded = link::decode(frame, dims);
        const auto* msg = std::get_if<link::Message>(&decoded);
        const auto* update = msg ? std::get_if<link::FeatureUpdate>(msg) : nullptr;
        if (update == nullptr || !update->inner.matches(p.spec, true)) {
          ++metrics.decode_errors;
          continue;
        }
        auto snapshot = std::make_shared<const FeatureNetwork>(FeatureNetwork{p.spec, update->inner, true});
        if (control::swap_features(*fast, snapshot) == control::SwapOutcome::Installed) phi = fast->phi(x);
      }
    }

    const Vector r = plant::reference_signal(cfg.reference, t).command;
    const control::ControlOutput out = control::total_control(p.preset.gains, fast, pid, x, r, phi, dt, cfg.saturation);
    const plant::Disturbance::Sample delta = disturbance.eval(x, t, u_prev);

    Vector x_next;
    bool crashed = false;
    try {
      x_next = plant::plant_step(plant, delta.value, x, out.u, t, dt);
    } catch (const Error& err) {
      if (err.code() != Errc::NonFiniteState) throw;
      crashed = true;
    }
    crashed = crashed || detect_crash(x_next, bounds);
    if (crashed) {
      metrics.crashed = true;
      metrics.crash_time = t1;
      break;
    }
    const Vector x_rm_next = plant::ref_step(ref, x_rm, r, dt);
    const Vector e = x_rm_next - x_next;

    if (fast != nullptr) {
      phi = fast->phi(x_next);
      if (learning) control::proj_update(*fast, phi, e, dt);
      nu_post = control::adaptive_term(fast->w, phi);
      metrics.max_w_norm = std::max(metrics.max_w_norm, fast->w.norm());
    }

    if (learning && env.to_trainer != nullptr && cfg.controller == ControllerKind::Dmrac &&
        (k + 1) % cfg.link.telemetry_stride == 0) {
      env.to_trainer->send(link::encode(link::Telemetry{telemetry_seq++, t1, x_next, nu_post, phi.head(k_net)}), t1);
      ++metrics.telemetry_sent;
    }
    if (env.trainer != nullptr) {
      for (const link::Frame& frame : env.trainer_inbox->receive(t1)) env.trainer->receive(frame);
      for (const link::Timed& pub : env.trainer->poll(t1)) env.trainer_outbox->send(pub.frame, pub.time);
    }

    const double e_norm = e.norm();
    metrics.peak_e = std::max(metrics.peak_e, e_norm);
    acc.add(e, t1 > final_start + 1e-12);
    ++metrics.ticks;

    if (cfg.record_trajectory) {
      result.trajectory.push_back(TrajectoryRow{k, t1, x_next, x_rm_next, r, out.u, out.nu_ad, delta.value, e_norm,
                                                fast ? fast->w.norm() : 0.0, fast ? fast->feature_version() : 0u});
    }
    if (observer) observer(TickView{k, t1, x_next, x_rm_next, r, out.u, nu_post, delta.value, phi, fast});

    x = x_next;
    x_rm = x_rm_next;
    u_prev = out.u;
    if (env.realtime) {
      tick_ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - tick_begin).count());
    }
  }

  acc.finish(metrics);
  if (fast != nullptr) {
    metrics.swaps = fast->swaps;
    metrics.stale_updates = fast->stale_updates;
  }
  if (env.trainer != nullptr) {
    metrics.admissions = env.trainer->stats().admitted;
    metrics.publishes = env.trainer->stats().publishes;
    metrics.decode_errors += env.trainer->stats().decode_errors;
    result.rounds = env.trainer->history();
    result.network = env.trainer->fitted_network();
  } else if (p.network && fast != nullptr) {
    result.network = flown_network(*fast);
  }
  metrics.tick_p99_ms = percentile(tick_ms, 0.99);
  return result;
}

trainer::TrainerConfig seeded_trainer(const ScenarioConfig& cfg) {
  trainer::TrainerConfig tc = cfg.trainer;
  tc.seed = derive_seed(cfg.seed, kSaltTrainer) ^ tc.seed;
  return tc;
}

}  // namespace

const char* to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Pid: return "pid";
    case ControllerKind::Mrac: return "mrac";
    case ControllerKind::Dmrac: return "dmrac";
  }
  return "unknown";
}

ControllerKind parse_controller(const std::string& name) {
  if (name == "pid") return ControllerKind::Pid;
  if (name == "mrac") return ControllerKind::Mrac;
  if (name == "dmrac") return ControllerKind::Dmrac;
  throw Error(Errc::ConfigError, "unknown controller '" + name + "' (expected pid, mrac or dmrac)");
}

std::int64_t ScenarioConfig::tick_count() const { return std::llround(duration * rate_hz); }

bool detect_crash(const Vector& x, const Vector& bounds) {
  if (!x.allFinite()) return true;
  return (x.cwiseAbs().array() > bounds.array()).any();
}

Vector crash_limits(const CrashBounds& bounds, int n) {
  Vector limits(n);
  for (int i = 0; i < n; ++i) limits(i) = i < n / 2 ? bounds.angle : bounds.rate;
  return limits;
}

nn::MlpSpec network_spec(const ScenarioConfig& cfg, int n, int m) {
  nn::MlpSpec spec;
  spec.widths.push_back(n);
  for (int h : cfg.network.hidden) spec.widths.push_back(h);
  spec.widths.push_back(cfg.network.feature_dim);
  spec.widths.push_back(m);
  const std::size_t hidden = spec.widths.size() - 2;
  spec.activations.assign(hidden, cfg.network.activation);
  spec.dropout.assign(hidden, cfg.network.dropout);
  spec.seed = derive_seed(cfg.seed, kSaltNetwork);
  spec.validate();
  return spec;
}

RunResult run_scenario(const ScenarioConfig& cfg, const TickObserver& observer) {
  Prepared p = prepare(cfg);
  LinkEnv env;
  std::optional<link::SimChannel> up;
  std::optional<link::SimChannel> down;
  std::optional<trainer::Trainer> trainer;
  if (cfg.controller == ControllerKind::Dmrac && !cfg.freeze_learning) {
    link::ChannelModel up_model = cfg.link.uplink;
    link::ChannelModel down_model = cfg.link.downlink;
    up_model.seed ^= derive_seed(cfg.seed, kSaltUplink);
    down_model.seed ^= derive_seed(cfg.seed, kSaltDownlink);
    up.emplace(up_model);
    down.emplace(down_model);
    const int n = p.preset.plant.state_dim();
    trainer.emplace(p.spec, *p.network, seeded_trainer(cfg),
                    link::Dims{n, p.preset.plant.input_dim(), cfg.network.feature_dim});
    env.to_trainer = &*up;
    env.trainer_inbox = &*up;
    env.trainer_outbox = &*down;
    env.from_trainer = &*down;
    env.trainer = &*trainer;
  }
  return fast_loop(cfg, p, env, observer);
}

RunResult run_scenario_socket(const ScenarioConfig& cfg, const std::vector<std::string>& trainer_argv) {
  Prepared p = prepare(cfg);
  LinkEnv env;
  env.realtime = true;
  std::optional<link::UdpLink> udp;
  pid_t child = -1;
  if (cfg.controller == ControllerKind::Dmrac && !cfg.freeze_learning) {
    udp.emplace(cfg.socket.fast_port, cfg.socket.host, cfg.socket.trainer_port);
    std::vector<char*> argv;
    for (const std::string& a : trainer_argv) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    if (::posix_spawn(&child, argv[0], nullptr, nullptr, argv.data(), environ) != 0) {
      throw Error(Errc::Io, "could not start trainer process " + trainer_argv.front());
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(200));  // let the trainer bind its port
    env.to_trainer = &*udp;
    env.from_trainer = &*udp;
  }
  RunResult result = fast_loop(cfg, p, env, {});
  if (child > 0) {
    for (int i = 0; i < 5; ++i) {
      udp->send(link::encode(link::Shutdown{static_cast<std::uint32_t>(i)}), 0.0);
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    int status = 0;
    ::waitpid(child, &status, 0);
  }
  return result;
}

void serve_trainer(const ScenarioConfig& cfg) {
  Prepared p = prepare(cfg);
  if (cfg.controller != ControllerKind::Dmrac) throw Error(Errc::ConfigError, "trainer: scenario is not DMRAC");
  const int n = p.preset.plant.state_dim();
  trainer::Trainer trainer(p.spec, *p.network, seeded_trainer(cfg),
                           link::Dims{n, p.preset.plant.input_dim(), cfg.network.feature_dim});
  link::UdpLink udp(cfg.socket.trainer_port, cfg.socket.host, cfg.socket.fast_port);
  const auto start = std::chrono::steady_clock::now();
  trainer::run_trainer(
      udp, udp, trainer,
      [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); },
      [] { std::this_thread::sleep_for(std::chrono::milliseconds(1)); });
}

ScenarioConfig with_seed(const ScenarioConfig& cfg, std::uint64_t seed) {
  ScenarioConfig out = cfg;
  out.seed = seed;
  if (cfg.fault_window) {
    std::mt19937_64 rng(derive_seed(seed, kSaltFault));
    std::uniform_real_distribution<double> onset(cfg.fault_window->first, cfg.fault_window->second);
    for (auto& term : out.disturbance) {
      if (auto* f = std::get_if<plant::RotorFault>(&term)) f->t_fault = onset(rng);
    }
  }
  return out;
}

CampaignResult run_campaign(const ScenarioConfig& cfg, int n_runs, std::uint64_t seed_base) {
  if (n_runs < 1) throw Error(Errc::InvalidArgument, "run_campaign: n_runs must be at least 1");
  CampaignResult out;
  ScenarioConfig base = cfg;
  base.record_trajectory = false;
  std::vector<double> finals;
  for (int i = 0; i < n_runs; ++i) {
    const RunResult run = run_scenario(with_seed(base, seed_base + static_cast<std::uint64_t>(i)));
    out.runs.push_back(run.metrics);
    if (run.metrics.crashed) {
      ++out.crashes;
    } else {
      finals.push_back(run.metrics.rmse_final);
    }
  }
  if (finals.empty()) {
    out.mean_rmse_final = std::nan("");
    out.var_rmse_final = std::nan("");
  } else {
    double sum = 0.0;
    for (double v : finals) sum += v;
    out.mean_rmse_final = sum / static_cast<double>(finals.size());
    double var = 0.0;
    for (double v : finals) var += (v - out.mean_rmse_final) * (v - out.mean_rmse_final);
    out.var_rmse_final = var / static_cast<double>(finals.size());
  }
  return out;
}

}  // namespace dmrac::harness
