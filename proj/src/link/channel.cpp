#include <algorithm>
#include <cmath>
#include <limits>

#include "dmrac/error.hpp"
#include "dmrac/link.hpp"

namespace dmrac::link {
namespace {

void validate(const ChannelModel& ch) {
  if (!(ch.drop >= 0.0 && ch.drop <= 1.0)) {
    throw Error(Errc::InvalidArgument, "ChannelModel: drop must lie in [0, 1]");
  }
  if (!(ch.latency_ms >= 0.0) || !(ch.jitter_ms >= 0.0)) {
    throw Error(Errc::InvalidArgument, "ChannelModel: latency and jitter must be non-negative");
  }
}

// Two draws per frame whatever the outcome, so a frame's fate depends only on
// its position in the send sequence.
std::optional<double> schedule(const ChannelModel& ch, std::mt19937_64& rng, double send_time,
                               double& last_arrival) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u_drop = unit(rng);
  const double u_jitter = unit(rng);
  if (u_drop < ch.drop) return std::nullopt;
  double delay = ch.latency_ms;
  if (ch.jitter_ms > 0.0) delay += -ch.jitter_ms * std::log1p(-u_jitter);
  double arrival = send_time + delay * 1e-3;
  if (!ch.reorder) arrival = std::max(arrival, last_arrival);
  last_arrival = std::max(last_arrival, arrival);
  return arrival;
}

}  // namespace

std::vector<Timed> channel_transfer(const ChannelModel& ch, const std::vector<Timed>& sent) {
  validate(ch);
  std::mt19937_64 rng(ch.seed);
  double last_arrival = -std::numeric_limits<double>::infinity();
  double last_send = -std::numeric_limits<double>::infinity();
  std::vector<Timed> delivered;
  for (const Timed& item : sent) {
    if (item.time < last_send) throw Error(Errc::InvalidArgument, "channel_transfer: send times must be non-decreasing");
    last_send = item.time;
    if (auto arrival = schedule(ch, rng, item.time, last_arrival)) delivered.push_back(Timed{item.frame, *arrival});
  }
  std::stable_sort(delivered.begin(), delivered.end(),
                   [](const Timed& a, const Timed& b) { return a.time < b.time; });
  return delivered;
}

SimChannel::SimChannel(ChannelModel model) : model_(model), rng_(model.seed) {
  validate(model_);
  last_send_ = -std::numeric_limits<double>::infinity();
  last_arrival_ = -std::numeric_limits<double>::infinity();
}

void SimChannel::send(const Frame& frame, double t) {
  if (t < last_send_) throw Error(Errc::InvalidArgument, "SimChannel: send times must be non-decreasing");
  last_send_ = t;
  ++sent_;
  const auto arrival = schedule(model_, rng_, t, last_arrival_);
  if (!arrival) {
    ++dropped_;
    return;
  }
  pending_.emplace(std::make_pair(*arrival, order_++), frame);
}

std::vector<Frame> SimChannel::receive(double now) {
  std::vector<Frame> out;
  auto it = pending_.begin();
  while (it != pending_.end() && it->first.first <= now) {
    out.push_back(std::move(it->second));
    it = pending_.erase(it);
  }
  return out;
}

}  // namespace dmrac::link
