#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dmrac/error.hpp"
#include "dmrac/overloaded.hpp"
#include "dmrac/trainer.hpp"

namespace dmrac::trainer {
namespace {

nn::Batch gather(const buffer::ReplayBuffer& buf, std::span<const std::size_t> idx) {
  const auto& entries = buf.entries();
  nn::Batch batch;
  batch.inputs.resize(entries.front().x.size(), static_cast<Eigen::Index>(idx.size()));
  batch.targets.resize(entries.front().y.size(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    batch.inputs.col(static_cast<Eigen::Index>(c)) = entries[idx[c]].x;
    batch.targets.col(static_cast<Eigen::Index>(c)) = entries[idx[c]].y;
  }
  return batch;
}

}  // namespace

void TrainerConfig::validate() const {
  if (!(eta > 0.0)) throw Error(Errc::InvalidArgument, "trainer: eta must be positive");
  if (minibatch < 1) throw Error(Errc::InvalidArgument, "trainer: minibatch must be at least 1");
  if (iterations < 0) throw Error(Errc::InvalidArgument, "trainer: iterations must be non-negative");
  if (!(val_split > 0.0 && val_split < 1.0)) throw Error(Errc::InvalidArgument, "trainer: val_split must lie in (0, 1)");
  if (lambda_pub && !(*lambda_pub >= 0.0)) throw Error(Errc::InvalidArgument, "trainer: lambda_pub must be >= 0");
  if (grad_clip && !(*grad_clip > 0.0)) throw Error(Errc::InvalidArgument, "trainer: grad_clip must be positive");
  if (mirror_output && (mirror_window < 1 || !(mirror_ridge > 0.0))) {
    throw Error(Errc::InvalidArgument, "trainer: mirror_window must be >= 1 and mirror_ridge > 0");
  }
  if (!(round_period > 0.0) || !(throttle > 0.0)) {
    throw Error(Errc::InvalidArgument, "trainer: round_period and throttle must be positive");
  }
}

RoundResult train_round(const nn::MlpSpec& spec, const nn::MlpParams& net, const buffer::ReplayBuffer& buf,
                        const TrainerConfig& cfg, std::mt19937_64& rng) {
  if (buf.size() < cfg.minibatch || buf.empty()) {
    throw Error(Errc::InsufficientData, "train_round: buffer holds fewer entries than one minibatch");
  }
  std::vector<std::size_t> order(buf.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::size_t n_val = 0;
  if (order.size() >= 2) {
    const auto wanted = static_cast<std::size_t>(std::lround(cfg.val_split * static_cast<double>(order.size())));
    n_val = std::clamp<std::size_t>(wanted, 1, order.size() - 1);
  }
  const std::span<const std::size_t> val_idx(order.data(), n_val);
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  const nn::Batch train_all = gather(buf, train_idx);
  const nn::Batch val = n_val > 0 ? gather(buf, val_idx) : train_all;

  RoundResult out;
  out.net = net;
  out.metrics.pre_val_loss = nn::loss(spec, net, val);

  const std::size_t m = std::min(cfg.minibatch, train_idx.size());
  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, train_idx.size() - 1);
      std::swap(train_idx[i], train_idx[pick(rng)]);
    }
    const nn::Batch mini = gather(buf, std::span<const std::size_t>(train_idx.data(), m));
    nn::Gradients g = nn::backprop(spec, out.net, mini, &rng);
    if (!cfg.train_output_layer) {
      g.layers.back().weights.setZero();
      g.layers.back().bias.setZero();
    }
    if (cfg.grad_clip) {
      double sq = 0.0;
      for (const nn::DenseLayer& layer : g.layers) sq += layer.weights.squaredNorm() + layer.bias.squaredNorm();
      const double norm = std::sqrt(sq);
      if (norm > *cfg.grad_clip) {
        for (nn::DenseLayer& layer : g.layers) {
          layer.weights *= *cfg.grad_clip / norm;
          layer.bias *= *cfg.grad_clip / norm;
        }
      }
    }
    nn::MlpParams next = nn::sgd_step(out.net, g, cfg.eta);
    if (!next.all_finite()) throw Error(Errc::NonFiniteGradient, "train_round: SGD produced non-finite weights");
    out.net = std::move(next);
  }
  out.metrics.train_loss = nn::loss(spec, out.net, train_all);
  out.metrics.val_loss = nn::loss(spec, out.net, val);
  out.metrics.buffer_size = buf.size();
  out.metrics.version = out.net.version;
  return out;
}

Matrix estimate_output_weights(const Matrix& phi, const Matrix& nu, const Matrix& prior, double ridge) {
  const Eigen::Index k = phi.cols() + 1;
  if (prior.rows() != k || prior.cols() != nu.cols() || phi.rows() != nu.rows()) {
    throw Error(Errc::ShapeMismatch, "estimate_output_weights: shapes disagree");
  }
  Matrix design(phi.rows(), k);
  design << phi, Vector::Ones(phi.rows());
  const Matrix lhs = design.transpose() * design + ridge * Matrix::Identity(k, k);
  const Matrix rhs = design.transpose() * nu + ridge * prior;
  return lhs.ldlt().solve(rhs);
}

bool should_publish(const std::vector<RoundMetrics>& history, const TrainerConfig& cfg) {
  if (history.empty()) throw Error(Errc::InvalidArgument, "should_publish: no completed round");
  if (cfg.policy == PublishPolicy::EveryRound) return true;
  const RoundMetrics& last = history.back();
  if (cfg.lambda_pub) return last.pre_val_loss > *cfg.lambda_pub;

  const bool published_before =
      std::any_of(history.begin(), history.end() - 1, [](const RoundMetrics& r) { return r.published; });
  if (!published_before) return true;
  double best = std::numeric_limits<double>::infinity();
  for (auto it = history.begin(); it != history.end() - 1; ++it) best = std::min(best, it->val_loss);
  return last.pre_val_loss > std::max(1e-3, 2.0 * best);
}

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& history) {
  out << "round,train_loss,val_loss,buffer_size,published,version\n";
  out.precision(17);
  for (const RoundMetrics& r : history) {
    out << r.round << ',' << r.train_loss << ',' << r.val_loss << ',' << r.buffer_size << ','
        << (r.published ? 1 : 0) << ',' << r.version << '\n';
  }
}

Trainer::Trainer(nn::MlpSpec spec, nn::MlpParams net, TrainerConfig cfg, link::Dims dims)
    : spec_(std::move(spec)),
      net_(std::move(net)),
      cfg_(cfg),
      dims_(dims),
      buffer_(cfg.capacity, cfg.zeta_tol),
      rng_(cfg.seed) {
  cfg_.validate();
  spec_.validate();
  if (!net_.matches(spec_)) throw Error(Errc::ShapeMismatch, "Trainer: network does not match its spec");
  published_.push_back(net_);
}

void Trainer::receive(std::span<const std::uint8_t> frame) {
  const link::DecodeResult decoded = link::decode(frame, dims_);
  const auto* msg = std::get_if<link::Message>(&decoded);
  if (msg == nullptr) {
    ++stats_.decode_errors;
    return;
  }
  std::visit(Overloaded{
                 [&](const link::Telemetry& t) {
                   ++stats_.telemetry;
                   if (cfg_.mirror_output) {
                     recent_.emplace_back(t.x, t.nu_ad);
                     recent_phi_.push_back(t.phi);
                     if (recent_.size() > cfg_.mirror_window) {
                       recent_.pop_front();
                       recent_phi_.pop_front();
                     }
                   }
                   if (buffer_.insert_if_novel(t.x, t.nu_ad, t.phi, tick_++)) ++stats_.admitted;
                 },
                 [&](const link::FeatureUpdate&) { ++stats_.decode_errors; },
                 [&](const link::Shutdown&) { shutdown_ = true; },
             },
             *msg);
}

std::vector<link::Timed> Trainer::poll(double now) {
  std::vector<link::Timed> out;
  for (;;) {
    if (in_progress_) {
      if (now < ready_at_) break;
      RoundResult done = std::move(*in_progress_);
      in_progress_.reset();
      done.metrics.round = static_cast<int>(history_.size()) + 1;
      history_.push_back(done.metrics);
      const bool publish = should_publish(history_, cfg_);
      net_ = publish || !cfg_.mirror_output ? std::move(done.net) : std::move(round_base_);
      if (publish) {
        ++net_.version;
        history_.back().published = true;
        ++stats_.publishes;
        published_.push_back(net_);
        if (published_.size() > kKeptVersions) published_.pop_front();
        out.push_back({link::encode(link::FeatureUpdate{net_.version, net_.inner()}), ready_at_});
      }
      history_.back().version = net_.version;
      continue;
    }
    if (buffer_.size() < cfg_.minibatch) break;
    const double start = std::max(ready_at_, now);
    round_base_ = net_;
    if (cfg_.mirror_output) mirror_output_layer();
    in_progress_ = train_round(spec_, round_base_, buffer_, cfg_, rng_);
    ready_at_ = start + cfg_.round_period * cfg_.throttle;
  }
  return out;
}

// Telemetry only says something about the fast weights in the basis that
// produced it. The fast loop may still run an older version after a lost
// update, so the round is rebased on whichever recent version matches the
// latest telemetry, and only samples from that version are used.
void Trainer::mirror_output_layer() {
  if (recent_.empty()) return;
  const auto matches = [&](const nn::MlpParams& net, std::size_t i) {
    const Vector mine = nn::features(spec_, net, recent_[i].first);
    return (mine - recent_phi_[i]).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + mine.cwiseAbs().maxCoeff());
  };
  const std::size_t latest = recent_.size() - 1;
  if (!matches(round_base_, latest)) {
    const auto it = std::find_if(published_.rbegin(), published_.rend(),
                                 [&](const nn::MlpParams& net) { return matches(net, latest); });
    if (it == published_.rend()) return;
    const std::uint32_t version = round_base_.version;
    round_base_ = *it;
    round_base_.version = version;
  }

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i <= latest; ++i)
    if (matches(round_base_, i)) rows.push_back(i);
  const Eigen::Index k = spec_.feature_dim();
  const Eigen::Index m = spec_.output_dim();
  Matrix phi(static_cast<Eigen::Index>(rows.size()), k);
  Matrix nu(static_cast<Eigen::Index>(rows.size()), m);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    phi.row(static_cast<Eigen::Index>(r)) = recent_phi_[rows[r]].transpose();
    nu.row(static_cast<Eigen::Index>(r)) = recent_[rows[r]].second.transpose();
  }
  nn::DenseLayer& last = round_base_.layers.back();
  Matrix prior(k + 1, m);
  prior.topRows(k) = last.weights.transpose();
  prior.bottomRows(1) = last.bias.transpose();
  const Matrix w = estimate_output_weights(phi, nu, prior, cfg_.mirror_ridge * static_cast<double>(rows.size()));
  last.weights = w.topRows(k).transpose();
  last.bias = w.bottomRows(1).transpose();
}

// Every buffered sample is used, so only a token ridge is needed.
constexpr double kFitRidge = 1e-3;

nn::MlpParams Trainer::fitted_network() const {
  nn::MlpParams out = net_;
  if (buffer_.empty()) return out;
  const auto& entries = buffer_.entries();
  const Eigen::Index k = spec_.feature_dim();
  const Eigen::Index m = spec_.output_dim();
  const auto count = static_cast<Eigen::Index>(entries.size());
  Matrix phi(count, k);
  Matrix nu(count, m);
  for (Eigen::Index i = 0; i < count; ++i) {
    phi.row(i) = nn::features(spec_, net_, entries[static_cast<std::size_t>(i)].x).transpose();
    nu.row(i) = entries[static_cast<std::size_t>(i)].y.transpose();
  }
  nn::DenseLayer& last = out.layers.back();
  Matrix prior(k + 1, m);
  prior.topRows(k) = last.weights.transpose();
  prior.bottomRows(1) = last.bias.transpose();
  const Matrix w = estimate_output_weights(phi, nu, prior, kFitRidge * static_cast<double>(count));
  last.weights = w.topRows(k).transpose();
  last.bias = w.bottomRows(1).transpose();
  return out;
}

void run_trainer(link::DatagramLink& inbox, link::DatagramLink& outbox, Trainer& trainer,
                 const std::function<double()>& clock, const std::function<void()>& idle) {
  while (!trainer.shutdown_requested()) {
    const double now = clock();
    for (const link::Frame& f : inbox.receive(now)) trainer.receive(f);
    for (const link::Timed& t : trainer.poll(now)) outbox.send(t.frame, t.time);
    if (!trainer.shutdown_requested()) idle();
  }
}

}  // namespace dmrac::trainer
