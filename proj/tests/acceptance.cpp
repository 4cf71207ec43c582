// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "dmrac/buffer.hpp"
#include "dmrac/harness.hpp"
#include "oracles.hpp"

using namespace dmrac;
using namespace dmrac::harness;

namespace {

const std::filesystem::path kConfigs = DMRAC_CONFIG_DIR;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Every scenario run goes through here so the weight bound can be audited
// across all of them.
struct Runs {
  double max_w = 0.0;
  double limit = 0.0;
  int scenarios = 0;

  RunResult run(const ScenarioConfig& cfg, const TickObserver& obs = {}) {
    RunResult r = run_scenario(cfg, obs);
    note(cfg, r.metrics);
    return r;
  }
  CampaignResult campaign(const ScenarioConfig& cfg, int n, std::uint64_t seed) {
    CampaignResult c = run_campaign(cfg, n, seed);
    for (const RunMetrics& m : c.runs) note(cfg, m);
    return c;
  }
  void note(const ScenarioConfig& cfg, const RunMetrics& m) {
    ++scenarios;
    max_w = std::max(max_w, m.max_w_norm);
    limit = std::max(limit, cfg.adaptation.w_bound * (1.0 + cfg.adaptation.eps_proj));
    if (m.max_w_norm > cfg.adaptation.w_bound * (1.0 + cfg.adaptation.eps_proj)) ++violations;
  }
  int violations = 0;
};

Verdict lyapunov_solver() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2718);
  int bad = 0;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int n = 1 + i % 10;
    const Matrix a = oracle::random_hurwitz(n, rng);
    const Matrix q = Matrix::Identity(n, n);
    const Matrix p = solve_lyapunov(a, q);
    const double rel = lyapunov_residual(a, p, q) / q.norm();
    worst = std::max(worst, rel);
    if (rel > 1e-9 || oracle::symmetric_eigenvalues(p)(0) <= 0.0) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 5.0, fmt("100 systems, worst residual %.2e x ||Q||, %d failures, %.2f s", worst, bad, secs)};
}

Verdict gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(31415);
  std::uniform_int_distribution<int> width(1, 7), depth(1, 3), batch(1, 9);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    nn::MlpSpec spec;
    spec.widths.push_back(width(rng));
    const int hidden = depth(rng);
    for (int h = 0; h < hidden; ++h) {
      spec.widths.push_back(width(rng));
      spec.activations.push_back(h % 2 == 0 ? nn::Activation::Tanh : nn::Activation::Identity);
      spec.dropout.push_back(0.0);
    }
    spec.widths.push_back(width(rng));
    spec.seed = 100 + i;
    nn::MlpParams p = nn::init(spec);
    for (auto& l : p.layers)
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = 0.1 * g(rng);
    const int m = batch(rng);
    nn::Batch b{Matrix(spec.input_dim(), m), Matrix(spec.output_dim(), m)};
    for (Eigen::Index c = 0; c < m; ++c) {
      for (Eigen::Index r = 0; r < b.inputs.rows(); ++r) b.inputs(r, c) = g(rng);
      for (Eigen::Index r = 0; r < b.targets.rows(); ++r) b.targets(r, c) = g(rng);
    }
    worst = std::max(worst, oracle::gradient_relative_error(spec, p, b));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 10.0, fmt("20 nets, worst relative error %.2e, %.2f s", worst, secs)};
}

Verdict exact_feature_convergence(Runs& runs, ScenarioConfig cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const double final_start = cfg.duration - 10.0;
  double nu_gap = 0.0;
  int final_ticks = 0;
  const RunResult r = runs.run(cfg, [&](const TickView& v) {
    if (v.t <= final_start + 1e-12) return;
    // Compare the adaptive term with the disturbance at the same state.
    nu_gap += (v.nu_ad - std::get<plant::SyntheticRbf>(cfg.disturbance[0]).weights.transpose() * v.phi).norm();
    ++final_ticks;
  });
  const double secs = seconds_since(t0);
  const double e = r.metrics.e_rms_final;
  return {!r.metrics.crashed && e < 1e-3 && secs < 20.0,
          fmt("final-10 s RMS ||e|| = %.2e, mean ||nu_ad - Delta|| = %.2e, %.1f s", e,
              nu_gap / std::max(1, final_ticks), secs)};
}

Verdict ultimate_bound(Runs& runs, ScenarioConfig cfg) {
  const auto& syn = std::get<plant::SyntheticRbf>(cfg.disturbance[0]);
  const Matrix w_star = syn.weights;
  cfg.record_trajectory = false;

  struct Tick {
    double v;
    double e_norm;
  };
  std::vector<Tick> ticks;
  double eps_bar = 0.0;
  Vector x_prev = Vector::Zero(6);
  Matrix p, gamma_inv;
  runs.run(cfg, [&](const TickView& v) {
    if (p.size() == 0) {
      p = v.fast->p;
      gamma_inv = v.fast->gamma.inverse();
    }
    // Delta applied during the step was evaluated at the pre-step state.
    eps_bar = std::max(eps_bar, (v.delta - w_star.transpose() * v.fast->phi(x_prev)).norm());
    x_prev = v.x;
    const Vector e = v.x_rm - v.x;
    const Matrix wt = v.fast->w - w_star;
    ticks.push_back({e.dot(p * e) + (wt.transpose() * gamma_inv * wt).trace(), e.norm()});
  });
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(p);
  const double radius = 2.0 * eig.eigenvalues().maxCoeff() * eps_bar / cfg.adaptation.q_scale;
  int above = 0, violations = 0;
  for (std::size_t i = 1; i < ticks.size(); ++i) {
    if (ticks[i - 1].e_norm <= radius) continue;
    ++above;
    if (ticks[i].v - ticks[i - 1].v > 1e-9) ++violations;
  }
  const double frac = above > 0 ? static_cast<double>(violations) / above : 0.0;
  return {above > 0 && violations == 0,
          fmt("eps_bar %.2e, radius %.2e, %d ticks above radius, violation fraction %.4f", eps_bar, radius, above,
              frac)};
}

Verdict fault_campaign(Runs& runs, const ScenarioConfig& base) {
  const auto t0 = std::chrono::steady_clock::now();
  std::map<ControllerKind, CampaignResult> out;
  for (ControllerKind k : {ControllerKind::Pid, ControllerKind::Mrac, ControllerKind::Dmrac}) {
    ScenarioConfig c = base;
    c.controller = k;
    c.record_trajectory = false;
    out[k] = runs.campaign(c, 8, 1);
  }
  const auto& pid = out[ControllerKind::Pid];
  const auto& mrac = out[ControllerKind::Mrac];
  const auto& dmrac = out[ControllerKind::Dmrac];
  const bool ordering_ok = dmrac.crashes <= mrac.crashes && dmrac.crashes == 0 && pid.crashes >= 1;
  const bool rmse_ok = std::isfinite(mrac.mean_rmse_final) && dmrac.mean_rmse_final < mrac.mean_rmse_final;
  const double secs = seconds_since(t0);
  return {ordering_ok && rmse_ok && secs < 300.0,
          fmt("crashes pid %d, mrac %d, dmrac %d; final RMSE mrac %.3e, dmrac %.3e; %.0f s", pid.crashes,
              mrac.crashes, dmrac.crashes, mrac.mean_rmse_final, dmrac.mean_rmse_final, secs)};
}

Verdict retention(Runs& runs) {
  ScenarioConfig train = load_config(kConfigs / "figure8.json");
  train.record_trajectory = false;
  const RunResult active = runs.run(train);
  if (active.metrics.crashed || !active.network) return {false, "training run crashed or produced no network"};

  ScenarioConfig frozen = load_config(kConfigs / "circle.json");
  frozen.record_trajectory = false;
  frozen.freeze_learning = true;
  frozen.warm_params = std::make_shared<const nn::MlpParams>(*active.network);
  const RunResult f = runs.run(frozen);
  const bool ok = !f.metrics.crashed && f.metrics.rmse <= 2.0 * active.metrics.rmse;
  return {ok, fmt("active figure-8 RMSE %.3e, frozen circle RMSE %s, ratio %.2f", active.metrics.rmse,
                  f.metrics.crashed ? "crashed" : fmt("%.3e", f.metrics.rmse).c_str(),
                  f.metrics.rmse / active.metrics.rmse)};
}

Verdict transfer(Runs& runs) {
  ScenarioConfig low = load_config(kConfigs / "figure8_low.json");
  low.record_trajectory = false;
  const RunResult trained = runs.run(low);
  if (!trained.network) return {false, "training run produced no network"};
  const auto net = std::make_shared<const nn::MlpParams>(*trained.network);

  const ScenarioConfig high = load_config(kConfigs / "figure8_high.json");
  int wins = 0;
  double warm_worst = 0.0, cold_best = 1e300;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    ScenarioConfig cold = with_seed(high, seed);
    cold.record_trajectory = false;
    ScenarioConfig warm = cold;
    warm.warm_params = net;
    const RunResult rc = runs.run(cold);
    const RunResult rw = runs.run(warm);
    const double pc = rc.metrics.crashed ? 1e300 : rc.metrics.peak_e;
    const double pw = rw.metrics.crashed ? 1e300 : rw.metrics.peak_e;
    if (pw <= pc) ++wins;
    warm_worst = std::max(warm_worst, pw);
    cold_best = std::min(cold_best, pc);
  }
  return {wins >= 6, fmt("%d/8 pairs with warm peak ||e|| <= cold (warm max %.3f, cold min %.3f)", wins, warm_worst,
                         cold_best)};
}

Verdict dropout(Runs& runs, const ScenarioConfig& base) {
  ScenarioConfig clean = base;
  clean.record_trajectory = false;
  ScenarioConfig lossy = clean;
  lossy.link.uplink.drop = 0.5;
  lossy.link.uplink.seed = 101;
  lossy.link.downlink.drop = 0.5;
  lossy.link.downlink.seed = 202;
  const RunResult rc = runs.run(clean);
  const RunResult rl = runs.run(lossy);
  const bool ok = !rl.metrics.crashed && rl.metrics.ticks == clean.tick_count() && !rc.metrics.crashed &&
                  rl.metrics.rmse <= 1.5 * rc.metrics.rmse;
  return {ok, fmt("lossless RMSE %.3e, 50%% drop RMSE %.3e (ratio %.2f), ticks %lld of %lld, swaps %llu vs %llu",
                  rc.metrics.rmse, rl.metrics.rmse, rl.metrics.rmse / rc.metrics.rmse,
                  static_cast<long long>(rl.metrics.ticks), static_cast<long long>(clean.tick_count()),
                  static_cast<unsigned long long>(rl.metrics.swaps),
                  static_cast<unsigned long long>(rc.metrics.swaps))};
}

Verdict buffer_properties() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  int failures = 0;

  // Capacity law under a long stream.
  buffer::ReplayBuffer b(50, 0.05);
  for (int i = 0; i < 5000; ++i) {
    Vector phi(6);
    for (int j = 0; j < 6; ++j) phi(j) = g(rng);
    b.insert_if_novel(Vector::Zero(1), Vector::Zero(1), phi, i);
    if (b.size() > b.capacity()) ++failures;
  }
  if (b.size() != b.capacity()) ++failures;

  // Duplicates score zero and are rejected.
  for (const auto& e : b.entries()) {
    if (b.gamma(e.phi) != 0.0) ++failures;
    if (b.insert_if_novel(e.x, e.y, e.phi, 9999)) ++failures;
  }

  // Eviction against brute force.
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t cap = 2 + trial % 29;
    const int k = 1 + trial % 8;
    buffer::ReplayBuffer full(cap, 0.0);
    for (std::size_t i = 0; i < cap; ++i) {
      Vector phi(k);
      for (int j = 0; j < k; ++j) phi(j) = g(rng);
      full.insert_if_novel(Vector::Zero(1), Vector::Zero(1), phi, i);
    }
    const Matrix f = full.feature_matrix();
    double best = -1.0;
    std::vector<double> score(cap);
    for (std::size_t skip = 0; skip < cap; ++skip) {
      Matrix reduced(cap - 1, k);
      for (std::size_t r = 0, o = 0; r < cap; ++r)
        if (r != skip) reduced.row(static_cast<Eigen::Index>(o++)) = f.row(static_cast<Eigen::Index>(r));
      score[skip] = oracle::min_singular_value(reduced);
      best = std::max(best, score[skip]);
    }
    const std::size_t victim = full.evict_svd_max();
    if (score[victim] < best - 1e-9 * std::max(1.0, best)) ++failures;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 30.0, fmt("%d failures, %.2f s", failures, secs)};
}

Verdict feature_separation(Runs& runs) {
  const std::vector<std::pair<std::string, std::string>> regimes{
      {"low", "wind_low.json"}, {"medium", "wind_medium.json"}, {"high", "wind_high.json"}, {"fault", "fault.json"}};
  const ScenarioConfig first = load_config(kConfigs / regimes.front().second);
  const nn::MlpSpec spec = network_spec(first, 6, 3);
  const nn::MlpParams untrained = nn::init(spec);

  // One network trained through every regime in turn.
  std::shared_ptr<const nn::MlpParams> net;
  std::vector<std::pair<std::string, Matrix>> states;
  for (const auto& [label, file] : regimes) {
    ScenarioConfig c = load_config(kConfigs / file);
    c.record_trajectory = false;
    if (net) c.warm_params = net;
    const RunResult r = runs.run(c);
    if (!r.network) return {false, "regime run produced no network"};
    net = std::make_shared<const nn::MlpParams>(*r.network);
    states.emplace_back(label, sample_states(load_config(kConfigs / file), 20));
  }
  const double before = export_features(states, spec, untrained).silhouette;
  const double after = export_features(states, spec, *net).silhouette;
  return {after > before, fmt("silhouette untrained %.5f, trained %.5f", before, after)};
}

Verdict determinism(Runs& runs) {
  int mismatches = 0;
  for (const char* file : {"fault.json", "figure8.json", "synthetic.json"}) {
    const ScenarioConfig c = load_config(kConfigs / file);
    std::ostringstream a, b;
    write_trajectory_csv(a, runs.run(c).trajectory);
    write_trajectory_csv(b, runs.run(c).trajectory);
    if (a.str() != b.str()) ++mismatches;
  }
  return {mismatches == 0, fmt("3 scenarios rerun, %d differing trajectory logs", mismatches)};
}

}  // namespace

int main() {
  Runs runs;
  std::map<int, Verdict> v;
  const std::map<int, std::string> names{
      {1, "Lyapunov solver"},          {2, "gradient correctness"},   {3, "projection bound"},
      {4, "exact-feature convergence"}, {5, "ultimate-bound consistency"}, {6, "fault-campaign ordering"},
      {7, "learning retention"},       {8, "warm-start transfer"},    {9, "dropout tolerance"},
      {10, "buffer properties"},       {11, "feature separation"},    {12, "determinism"}};

  auto guarded = [](const std::function<Verdict()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Verdict{false, std::string("error: ") + e.what()};
    }
  };

  const ScenarioConfig synthetic = load_config(kConfigs / "synthetic.json");
  const ScenarioConfig fault = load_config(kConfigs / "fault.json");

  v[1] = guarded(lyapunov_solver);
  v[2] = guarded(gradient_check);
  v[4] = guarded([&] { return exact_feature_convergence(runs, synthetic); });
  v[5] = guarded([&] { return ultimate_bound(runs, synthetic); });
  v[6] = guarded([&] { return fault_campaign(runs, fault); });
  v[7] = guarded([&] { return retention(runs); });
  v[8] = guarded([&] { return transfer(runs); });
  v[9] = guarded([&] { return dropout(runs, fault); });
  v[10] = guarded(buffer_properties);
  v[11] = guarded([&] { return feature_separation(runs); });
  v[12] = guarded([&] { return determinism(runs); });
  v[3] = Verdict{runs.violations == 0 && runs.scenarios > 0,
                 fmt("%d scenario runs, max ||W||_F %.3f, limit %.3f, %d violations", runs.scenarios, runs.max_w,
                     runs.limit, runs.violations)};

  int failed = 0;
  for (const auto& [id, verdict] : v) {
    if (!verdict.pass) ++failed;
    std::printf("criterion %2d: %s  %s: %s\n", id, verdict.pass ? "PASS" : "FAIL", names.at(id).c_str(),
                verdict.detail.c_str());
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(v.size()) - failed, v.size());
  return failed == 0 ? 0 : 1;
}
