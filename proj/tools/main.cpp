#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dmrac/harness.hpp"

namespace fs = std::filesystem;
using namespace dmrac;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitCrash = 3;

json metrics_json(const harness::RunMetrics& m) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return json{{"rmse", m.rmse},
              {"rmse_final", m.rmse_final},
              {"rmse_axis", vec(m.rmse_axis)},
              {"rmse_axis_final", vec(m.rmse_axis_final)},
              {"e_rms_final", m.e_rms_final},
              {"peak_e", m.peak_e},
              {"crashed", m.crashed},
              {"crash_time", m.crash_time},
              {"ticks", m.ticks},
              {"max_w_norm", m.max_w_norm},
              {"swaps", m.swaps},
              {"stale_updates", m.stale_updates},
              {"admissions", m.admissions},
              {"publishes", m.publishes},
              {"telemetry_sent", m.telemetry_sent},
              {"decode_errors", m.decode_errors},
              {"tick_p99_ms", m.tick_p99_ms}};
}

std::ofstream open_out(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream out(dir / name);
  if (!out) throw Error(Errc::Io, "cannot write " + (dir / name).string());
  return out;
}

harness::ScenarioConfig load(const std::string& path, std::optional<std::uint64_t> seed,
                             const std::string& controller) {
  harness::ScenarioConfig cfg = harness::load_config(path);
  if (!controller.empty()) cfg.controller = harness::parse_controller(controller);
  if (seed) cfg = harness::with_seed(cfg, *seed);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous deep model reference adaptive control simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string mode = "sim";
  std::string controller;
  bool fail_on_crash = false;

  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("--config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Scenario seed (overrides the config)");
  run->add_option("--out-dir", out_dir, "Directory for logs");
  run->add_option("--mode", mode, "Clock mode")->check(CLI::IsMember({"sim", "socket"}));
  run->add_option("--controller", controller, "pid, mrac or dmrac")->check(CLI::IsMember({"pid", "mrac", "dmrac"}));
  run->add_flag("--fail-on-crash", fail_on_crash, "Exit with status 3 when the vehicle crashes");

  int runs = 8;
  std::uint64_t seed_base = 1;
  auto* campaign = app.add_subcommand("campaign", "Run a seeded batch of one scenario");
  campaign->add_option("--config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  campaign->add_option("--runs", runs, "Number of runs")->check(CLI::PositiveNumber);
  campaign->add_option("--seed", seed_base, "First seed");
  campaign->add_option("--out-dir", out_dir, "Directory for logs");
  campaign->add_option("--controller", controller, "pid, mrac or dmrac")->check(CLI::IsMember({"pid", "mrac", "dmrac"}));
  campaign->add_flag("--fail-on-crash", fail_on_crash, "Exit with status 3 when any run crashes");

  std::vector<std::string> regimes;
  std::string network_path;
  std::string network_config;
  int stride = 20;
  auto* features = app.add_subcommand("export-features", "Export labelled feature vectors and their PCA projection");
  features->add_option("--regime", regimes, "label=config.json, repeatable")->required();
  features->add_option("--network", network_path, "Network snapshot (default: untrained)");
  features->add_option("--network-config", network_config, "Scenario whose network shape and seed to use")
      ->required()
      ->check(CLI::ExistingFile);
  features->add_option("--stride", stride, "Sample every this many ticks")->check(CLI::PositiveNumber);
  features->add_option("--seed", seed, "Scenario seed for every regime");
  features->add_option("--out-dir", out_dir, "Directory for CSVs");

  std::string log_path;
  double final_window = 10.0;
  int r_dim = 3;
  auto* replay = app.add_subcommand("replay", "Recompute metrics from a trajectory log");
  replay->add_option("--log", log_path, "trajectory.csv")->required()->check(CLI::ExistingFile);
  replay->add_option("--final-window", final_window, "Seconds in the final window");
  replay->add_option("--axes", r_dim, "Tracked attitude axes");

  auto* trainer_cmd = app.add_subcommand("trainer", "Serve the trainer side of a socket-mode run");
  trainer_cmd->add_option("--config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  trainer_cmd->add_option("--seed", seed, "Scenario seed");
  trainer_cmd->group("");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const harness::ScenarioConfig cfg = load(config_path, seed, controller);
      harness::RunResult result;
      if (mode == "socket") {
        std::vector<std::string> child{fs::read_symlink("/proc/self/exe").string(), "trainer", "--config",
                                       config_path, "--seed", std::to_string(cfg.seed)};
        result = harness::run_scenario_socket(cfg, child);
      } else {
        result = harness::run_scenario(cfg);
      }
      const fs::path dir(out_dir);
      {
        auto out = open_out(dir, "trajectory.csv");
        harness::write_trajectory_csv(out, result.trajectory);
      }
      if (!result.rounds.empty()) {
        auto out = open_out(dir, "trainer_metrics.csv");
        trainer::write_metrics_csv(out, result.rounds);
      }
      if (result.network) harness::save_snapshot(dir / "network.mlps", *result.network);
      const json summary = metrics_json(result.metrics);
      open_out(dir, "metrics.json") << summary.dump(2) << '\n';
      std::cout << summary.dump(2) << '\n';
      return fail_on_crash && result.metrics.crashed ? kExitCrash : 0;
    }

    if (*campaign) {
      const harness::ScenarioConfig cfg = load(config_path, std::nullopt, controller);
      const harness::CampaignResult result = harness::run_campaign(cfg, runs, seed_base);
      auto out = open_out(fs::path(out_dir), "campaign.csv");
      harness::write_campaign_csv(out, result);
      const json summary{{"controller", harness::to_string(cfg.controller)},
                         {"runs", runs},
                         {"crashes", result.crashes},
                         {"mean_rmse_final", result.mean_rmse_final},
                         {"var_rmse_final", result.var_rmse_final}};
      std::cout << summary.dump(2) << '\n';
      return fail_on_crash && result.crashes > 0 ? kExitCrash : 0;
    }

    if (*features) {
      const harness::ScenarioConfig net_cfg = load(network_config, std::nullopt, "");
      const nn::MlpSpec spec = harness::network_spec(net_cfg, 6, 3);
      const nn::MlpParams net = network_path.empty() ? nn::init(spec) : harness::load_snapshot(network_path, spec);
      std::vector<std::pair<std::string, Matrix>> states;
      for (const std::string& item : regimes) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw Error(Errc::ConfigError, "--regime expects label=config.json");
        states.emplace_back(item.substr(0, eq), harness::sample_states(load(item.substr(eq + 1), seed, ""), stride));
      }
      const harness::FeatureExport ex = harness::export_features(states, spec, net);
      const fs::path dir(out_dir);
      {
        auto out = open_out(dir, "features.csv");
        harness::write_features_csv(out, ex.labels, ex.features, "phi");
      }
      {
        auto out = open_out(dir, "features_pca.csv");
        harness::write_features_csv(out, ex.labels, ex.projected, "pc");
      }
      std::vector<double> explained(ex.explained.data(), ex.explained.data() + ex.explained.size());
      std::cout << json{{"samples", ex.labels.size()}, {"explained", explained}, {"silhouette", ex.silhouette}}.dump(2)
                << '\n';
      return 0;
    }

    if (*replay) {
      std::ifstream in(log_path);
      std::cout << metrics_json(harness::replay_metrics(in, r_dim, final_window)).dump(2) << '\n';
      return 0;
    }

    if (*trainer_cmd) {
      harness::serve_trainer(load(config_path, seed, ""));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == Errc::ConfigError ? kExitConfig : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
