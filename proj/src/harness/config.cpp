#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dmrac/harness.hpp"

namespace dmrac::harness {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(Errc::ConfigError, where + ": " + what);
}

void allow_only(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) fail(where, "expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) fail(where, "unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(where + "." + key, e.what());
  }
}

Vector read_vector(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(where, "expected numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Matrix read_matrix(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) fail(where, "expected a non-empty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = read_vector(j[r], where);
    if (static_cast<std::size_t>(row.size()) != cols) fail(where, "rows differ in length");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

plant::WindLevel parse_level(const std::string& s, const std::string& where) {
  if (s == "low") return plant::WindLevel::Low;
  if (s == "medium") return plant::WindLevel::Medium;
  if (s == "high") return plant::WindLevel::High;
  fail(where, "wind level must be low, medium or high");
}

// Synthetic RBF generated from a seed: centers uniform in the attitude box,
// weights uniform in [-magnitude, magnitude].
plant::SyntheticRbf generate_rbf(const json& j, const std::string& where) {
  allow_only(j, where, {"count", "angle_span", "rate_span", "width", "magnitude", "seed", "bias_feature"});
  int count = 8;
  double angle_span = 0.3, rate_span = 1.5, width = 0.8, magnitude = 2.0;
  std::uint64_t seed = 1;
  bool bias = false;
  read(j, "count", count, where);
  read(j, "angle_span", angle_span, where);
  read(j, "rate_span", rate_span, where);
  read(j, "width", width, where);
  read(j, "magnitude", magnitude, where);
  read(j, "seed", seed, where);
  read(j, "bias_feature", bias, where);
  if (count < 1) fail(where, "count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  plant::SyntheticRbf s;
  s.centers.resize(count, 6);
  for (int i = 0; i < count; ++i) {
    for (int c = 0; c < 6; ++c) s.centers(i, c) = unit(rng) * (c < 3 ? angle_span : rate_span);
  }
  s.widths = Vector::Constant(count, width);
  s.bias_feature = bias;
  s.weights.resize(count + (bias ? 1 : 0), 3);
  for (Eigen::Index r = 0; r < s.weights.rows(); ++r) {
    for (int c = 0; c < 3; ++c) s.weights(r, c) = magnitude * unit(rng);
  }
  return s;
}

plant::DisturbanceTerm parse_term(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("type")) fail(where, "each disturbance needs a 'type'");
  const std::string type = j.at("type").get<std::string>();
  if (type == "synthetic_rbf") {
    if (j.contains("generate")) {
      allow_only(j, where, {"type", "generate"});
      return generate_rbf(j.at("generate"), where + ".generate");
    }
    allow_only(j, where, {"type", "weights", "centers", "widths", "bias_feature"});
    plant::SyntheticRbf s;
    s.weights = read_matrix(j.at("weights"), where + ".weights");
    s.centers = read_matrix(j.at("centers"), where + ".centers");
    s.widths = read_vector(j.at("widths"), where + ".widths");
    read(j, "bias_feature", s.bias_feature, where);
    return s;
  }
  if (type == "wind") {
    allow_only(j, where, {"type", "level", "bias", "coupling"});
    plant::WindBias w;
    std::string level = "low";
    read(j, "level", level, where);
    w.level = parse_level(level, where);
    w.bias = j.contains("bias") ? read_vector(j.at("bias"), where + ".bias") : Vector::Zero(3);
    read(j, "coupling", w.coupling, where);
    return w;
  }
  if (type == "cloth") {
    allow_only(j, where, {"type", "seed", "reversion", "volatility", "coupling", "mean", "initial"});
    plant::Cloth c;
    read(j, "seed", c.seed, where);
    read(j, "reversion", c.reversion, where);
    read(j, "volatility", c.volatility, where);
    read(j, "coupling", c.coupling, where);
    if (j.contains("mean")) c.mean = read_vector(j.at("mean"), where + ".mean");
    if (j.contains("initial")) c.initial = read_vector(j.at("initial"), where + ".initial");
    return c;
  }
  if (type == "rotor_fault") {
    allow_only(j, where, {"type", "t_fault", "effectiveness", "bias"});
    plant::RotorFault f;
    read(j, "t_fault", f.t_fault, where);
    read(j, "effectiveness", f.effectiveness, where);
    f.bias = j.contains("bias") ? read_vector(j.at("bias"), where + ".bias") : Vector::Zero(3);
    return f;
  }
  fail(where, "unknown disturbance type '" + type + "'");
}

plant::ReferenceSignal parse_reference(const json& j) {
  const std::string where = "reference";
  if (!j.is_object() || !j.contains("type")) fail(where, "needs a 'type'");
  const std::string type = j.at("type").get<std::string>();
  if (type == "hover") {
    allow_only(j, where, {"type", "height"});
    plant::Hover h;
    read(j, "height", h.height, where);
    return h;
  }
  if (type == "circle") {
    allow_only(j, where, {"type", "radius", "period", "height"});
    plant::Circle c;
    read(j, "radius", c.radius, where);
    read(j, "period", c.period, where);
    read(j, "height", c.height, where);
    return c;
  }
  if (type == "figure8") {
    allow_only(j, where, {"type", "scale", "period", "height"});
    plant::FigureEight f;
    read(j, "scale", f.scale, where);
    read(j, "period", f.period, where);
    read(j, "height", f.height, where);
    return f;
  }
  if (type == "step") {
    allow_only(j, where, {"type", "time", "level", "axis"});
    plant::Step s;
    read(j, "time", s.time, where);
    read(j, "level", s.level, where);
    read(j, "axis", s.axis, where);
    return s;
  }
  fail(where, "unknown reference type '" + type + "'");
}

link::ChannelModel parse_channel(const json& j, const std::string& where) {
  allow_only(j, where, {"drop", "latency_ms", "jitter_ms", "reorder", "seed"});
  link::ChannelModel ch;
  read(j, "drop", ch.drop, where);
  read(j, "latency_ms", ch.latency_ms, where);
  read(j, "jitter_ms", ch.jitter_ms, where);
  read(j, "reorder", ch.reorder, where);
  read(j, "seed", ch.seed, where);
  return ch;
}

trainer::TrainerConfig parse_trainer(const json& j) {
  const std::string where = "trainer";
  allow_only(j, where, {"eta", "minibatch", "iterations", "policy", "lambda_pub", "val_split", "seed", "capacity",
                        "zeta_tol", "round_period", "throttle", "mirror_output", "train_output_layer", "grad_clip", "mirror_window",
                        "mirror_ridge"});
  trainer::TrainerConfig t;
  read(j, "eta", t.eta, where);
  read(j, "minibatch", t.minibatch, where);
  read(j, "iterations", t.iterations, where);
  if (j.contains("policy")) {
    const std::string p = j.at("policy").get<std::string>();
    if (p == "every_round") {
      t.policy = trainer::PublishPolicy::EveryRound;
    } else if (p == "loss_threshold") {
      t.policy = trainer::PublishPolicy::LossThreshold;
    } else {
      fail(where, "policy must be every_round or loss_threshold");
    }
  }
  if (j.contains("lambda_pub") && !j.at("lambda_pub").is_null()) t.lambda_pub = j.at("lambda_pub").get<double>();
  read(j, "val_split", t.val_split, where);
  read(j, "seed", t.seed, where);
  read(j, "capacity", t.capacity, where);
  read(j, "zeta_tol", t.zeta_tol, where);
  read(j, "round_period", t.round_period, where);
  read(j, "throttle", t.throttle, where);
  read(j, "mirror_output", t.mirror_output, where);
  read(j, "train_output_layer", t.train_output_layer, where);
  if (j.contains("grad_clip")) {
    if (j.at("grad_clip").is_null()) t.grad_clip.reset();
    else t.grad_clip = j.at("grad_clip").get<double>();
  }
  read(j, "mirror_window", t.mirror_window, where);
  read(j, "mirror_ridge", t.mirror_ridge, where);
  return t;
}

ScenarioConfig from_json(const json& j) {
  allow_only(j, "config",
             {"name", "preset", "controller", "duration", "rate_hz", "seed", "reference", "disturbance", "fault_window",
              "adaptation", "pid", "rbf", "network", "trainer", "link", "socket", "saturation", "warm_start",
              "freeze_learning", "crash_bounds", "final_window"});
  ScenarioConfig cfg;
  read(j, "name", cfg.name, "config");
  read(j, "preset", cfg.preset, "config");
  if (j.contains("controller")) cfg.controller = parse_controller(j.at("controller").get<std::string>());
  read(j, "duration", cfg.duration, "config");
  read(j, "rate_hz", cfg.rate_hz, "config");
  read(j, "seed", cfg.seed, "config");
  if (j.contains("reference")) cfg.reference = parse_reference(j.at("reference"));
  if (j.contains("disturbance")) {
    const json& d = j.at("disturbance");
    if (!d.is_array()) fail("disturbance", "expected an array of terms");
    for (std::size_t i = 0; i < d.size(); ++i) cfg.disturbance.push_back(parse_term(d[i], "disturbance[" + std::to_string(i) + "]"));
  }
  if (j.contains("fault_window")) {
    const Vector w = read_vector(j.at("fault_window"), "fault_window");
    if (w.size() != 2) fail("fault_window", "expected [start, end]");
    cfg.fault_window = std::make_pair(w(0), w(1));
  }
  if (j.contains("adaptation")) {
    const json& a = j.at("adaptation");
    allow_only(a, "adaptation", {"gamma_mrac", "gamma_dmrac", "w_bound", "eps_proj", "q_scale"});
    read(a, "gamma_mrac", cfg.adaptation.gamma_mrac, "adaptation");
    read(a, "gamma_dmrac", cfg.adaptation.gamma_dmrac, "adaptation");
    read(a, "w_bound", cfg.adaptation.w_bound, "adaptation");
    read(a, "eps_proj", cfg.adaptation.eps_proj, "adaptation");
    read(a, "q_scale", cfg.adaptation.q_scale, "adaptation");
  }
  if (j.contains("pid")) {
    const json& p = j.at("pid");
    allow_only(p, "pid", {"kp", "ki", "kd", "clamp"});
    read(p, "kp", cfg.pid.kp, "pid");
    read(p, "ki", cfg.pid.ki, "pid");
    read(p, "kd", cfg.pid.kd, "pid");
    read(p, "clamp", cfg.pid.clamp, "pid");
  }
  if (j.contains("rbf")) {
    const json& r = j.at("rbf");
    allow_only(r, "rbf", {"count", "angle_span", "rate_span", "width", "seed", "from_disturbance"});
    read(r, "count", cfg.rbf.count, "rbf");
    read(r, "angle_span", cfg.rbf.angle_span, "rbf");
    read(r, "rate_span", cfg.rbf.rate_span, "rbf");
    read(r, "width", cfg.rbf.width, "rbf");
    read(r, "seed", cfg.rbf.seed, "rbf");
    read(r, "from_disturbance", cfg.rbf.from_disturbance, "rbf");
  }
  if (j.contains("network")) {
    const json& n = j.at("network");
    allow_only(n, "network", {"hidden", "feature_dim", "dropout", "activation"});
    read(n, "hidden", cfg.network.hidden, "network");
    read(n, "feature_dim", cfg.network.feature_dim, "network");
    read(n, "dropout", cfg.network.dropout, "network");
    if (n.contains("activation")) {
      const std::string a = n.at("activation").get<std::string>();
      if (a == "tanh") {
        cfg.network.activation = nn::Activation::Tanh;
      } else if (a == "relu") {
        cfg.network.activation = nn::Activation::Relu;
      } else {
        fail("network.activation", "expected tanh or relu");
      }
    }
  }
  if (j.contains("trainer")) cfg.trainer = parse_trainer(j.at("trainer"));
  if (j.contains("link")) {
    const json& l = j.at("link");
    allow_only(l, "link", {"uplink", "downlink", "telemetry_stride"});
    if (l.contains("uplink")) cfg.link.uplink = parse_channel(l.at("uplink"), "link.uplink");
    if (l.contains("downlink")) cfg.link.downlink = parse_channel(l.at("downlink"), "link.downlink");
    read(l, "telemetry_stride", cfg.link.telemetry_stride, "link");
  }
  if (j.contains("socket")) {
    const json& s = j.at("socket");
    allow_only(s, "socket", {"host", "fast_port", "trainer_port"});
    read(s, "host", cfg.socket.host, "socket");
    read(s, "fast_port", cfg.socket.fast_port, "socket");
    read(s, "trainer_port", cfg.socket.trainer_port, "socket");
  }
  if (j.contains("saturation") && !j.at("saturation").is_null()) cfg.saturation = j.at("saturation").get<double>();
  if (j.contains("warm_start") && !j.at("warm_start").is_null()) cfg.warm_start = j.at("warm_start").get<std::string>();
  read(j, "freeze_learning", cfg.freeze_learning, "config");
  if (j.contains("crash_bounds")) {
    const json& c = j.at("crash_bounds");
    allow_only(c, "crash_bounds", {"angle", "rate"});
    read(c, "angle", cfg.crash.angle, "crash_bounds");
    read(c, "rate", cfg.crash.rate, "crash_bounds");
  }
  read(j, "final_window", cfg.final_window, "config");
  return cfg;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (preset != "quad_attitude") fail("preset", "only 'quad_attitude' is available");
  if (!(duration > 0.0) || !(rate_hz > 0.0)) fail("config", "duration and rate_hz must be positive");
  const double ticks = duration * rate_hz;
  if (std::abs(ticks - std::round(ticks)) > 1e-9 * std::max(1.0, ticks)) {
    fail("config", "duration * rate_hz must be an integer tick count");
  }
  if (!(final_window > 0.0) || final_window > duration) fail("final_window", "must lie in (0, duration]");
  if (link.telemetry_stride < 1) fail("link.telemetry_stride", "must be at least 1");
  if (fault_window && !(fault_window->first >= 0.0 && fault_window->first <= fault_window->second)) {
    fail("fault_window", "expected 0 <= start <= end");
  }
  if (!(crash.angle > 0.0) || !(crash.rate > 0.0)) fail("crash_bounds", "bounds must be positive");
  if (saturation && !(*saturation >= 0.0)) fail("saturation", "must be non-negative");
  if (rbf.count < 1 || !(rbf.width > 0.0)) fail("rbf", "count and width must be positive");
  if (network.feature_dim < 1) fail("network.feature_dim", "must be positive");
  if (warm_start && !warm_params && !std::filesystem::exists(*warm_start)) {
    fail("warm_start", "snapshot file not found: " + *warm_start);
  }
  try {
    trainer.validate();
  } catch (const Error& e) {
    fail("trainer", e.what());
  }
}

ScenarioConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail("config", std::string("invalid JSON: ") + e.what());
  }
  ScenarioConfig cfg;
  try {
    cfg = from_json(j);
  } catch (const json::exception& e) {
    fail("config", e.what());
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot open config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

}  // namespace dmrac::harness
