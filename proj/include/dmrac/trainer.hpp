#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "dmrac/buffer.hpp"
#include "dmrac/link.hpp"
#include "dmrac/nn.hpp"

namespace dmrac::trainer {

enum class PublishPolicy { EveryRound, LossThreshold };

struct TrainerConfig {
  double eta = 0.02;
  std::size_t minibatch = 64;
  int iterations = 40;
  PublishPolicy policy = PublishPolicy::LossThreshold;
  // Fixed publish threshold; when unset it is twice the best validation loss
  // seen so far (floor 1e-3) and the first completed round always publishes.
  std::optional<double> lambda_pub;
  double val_split = 0.2;
  std::uint64_t seed = 0;
  std::size_t capacity = 250;
  double zeta_tol = 0.05;
  // Simulated seconds one round takes; `throttle` stretches it to model a
  // slower trainer.
  double round_period = 0.5;
  double throttle = 1.0;
  // Before each round the output layer is set to the fast loop's weights,
  // recovered by ridge least squares from the latest `mirror_window`
  // telemetry samples, and rounds that are not published are discarded. The
  // trained features then stay consistent with the weights the fast loop
  // keeps across a swap.
  bool mirror_output = true;
  // With a mirrored output layer only the features need to move, so the
  // output layer is held fixed during SGD by default.
  bool train_output_layer = false;
  // Global gradient-norm clip. Targets are torques of order 10, so raw
  // gradients would saturate the tanh features within one round.
  std::optional<double> grad_clip = 1.0;
  std::size_t mirror_window = 64;
  double mirror_ridge = 1e-2;  // per sample; directions with less excitation keep the prior

  void validate() const;
};

struct RoundMetrics {
  int round = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double pre_val_loss = 0.0;  // validation loss before the round's SGD steps
  std::size_t buffer_size = 0;
  bool published = false;
  std::uint32_t version = 0;
};

struct RoundResult {
  nn::MlpParams net;
  RoundMetrics metrics;
};

/// Re-splits the buffer into train/validation, runs cfg.iterations SGD steps
/// on fresh minibatches from the training part and reports eval-mode losses.
RoundResult train_round(const nn::MlpSpec& spec, const nn::MlpParams& net, const buffer::ReplayBuffer& buf,
                        const TrainerConfig& cfg, std::mt19937_64& rng);

/// Ridge estimate of W ((k + 1) x m, last row pairs with the constant feature)
/// from rows of features `phi` (samples x k) and outputs `nu` (samples x m),
/// shrunk towards `prior`.
Matrix estimate_output_weights(const Matrix& phi, const Matrix& nu, const Matrix& prior, double ridge);

/// Decision after the last entry of `history` (which must be non-empty).
bool should_publish(const std::vector<RoundMetrics>& history, const TrainerConfig& cfg);

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& history);

struct TrainerStats {
  std::uint64_t telemetry = 0;
  std::uint64_t admitted = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t publishes = 0;
};

/// The slow learner as an event-driven object. Rounds start whenever the
/// trainer is idle and the buffer holds a minibatch; a round's result becomes
/// visible `round_period * throttle` seconds after it started.
class Trainer {
 public:
  Trainer(nn::MlpSpec spec, nn::MlpParams net, TrainerConfig cfg, link::Dims dims);

  /// Decodes one inbound frame. Bad frames are counted and skipped.
  void receive(std::span<const std::uint8_t> frame);

  /// Advances to `now`; returns encoded FeatureUpdate frames stamped with
  /// their publish times (all <= now).
  std::vector<link::Timed> poll(double now);

  bool shutdown_requested() const { return shutdown_; }
  const nn::MlpParams& network() const { return net_; }
  /// Current feature layers with the output layer refitted by ridge least
  /// squares to every buffered sample, i.e. the best fixed network for the
  /// data seen so far. Falls back to network() while the buffer is empty.
  nn::MlpParams fitted_network() const;
  const buffer::ReplayBuffer& buffer() const { return buffer_; }
  const std::vector<RoundMetrics>& history() const { return history_; }
  const TrainerStats& stats() const { return stats_; }

 private:
  void mirror_output_layer();

  nn::MlpSpec spec_;
  nn::MlpParams net_;
  TrainerConfig cfg_;
  link::Dims dims_;
  buffer::ReplayBuffer buffer_;
  std::mt19937_64 rng_;
  std::optional<RoundResult> in_progress_;
  nn::MlpParams round_base_;
  std::deque<std::pair<Vector, Vector>> recent_;  // (x, nu_ad) of the latest telemetry
  std::deque<Vector> recent_phi_;
  static constexpr std::size_t kKeptVersions = 16;
  std::deque<nn::MlpParams> published_;  // latest published networks, oldest first
  double ready_at_ = 0.0;
  std::uint64_t tick_ = 0;
  bool shutdown_ = false;
  std::vector<RoundMetrics> history_;
  TrainerStats stats_;
};

/// Wall-clock loop for a trainer in its own process: drains `inbox`, trains,
/// publishes on `outbox`, and returns after a Shutdown message. `idle` is
/// called between polls.
void run_trainer(link::DatagramLink& inbox, link::DatagramLink& outbox, Trainer& trainer,
                 const std::function<double()>& clock, const std::function<void()>& idle);

}  // namespace dmrac::trainer
