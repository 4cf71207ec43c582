#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dmrac/core_math.hpp"
#include "dmrac/nn.hpp"

namespace dmrac::link {

using Frame = std::vector<std::uint8_t>;

// Frame layout, little-endian:
//   "DMRC" | u8 version=1 | u8 type | u32 seq | u32 payload_len | payload | u32 CRC-32(header+payload)
inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderSize = 14;
inline constexpr std::size_t kFrameOverhead = kHeaderSize + 4;

enum class MessageType : std::uint8_t { Telemetry = 1, FeatureUpdate = 2, Shutdown = 3 };

struct Telemetry {
  std::uint32_t seq = 0;
  double t = 0.0;
  Vector x;
  Vector nu_ad;
  Vector phi;
};

/// Inner-layer parameters; the header sequence field carries the version.
struct FeatureUpdate {
  std::uint32_t version = 0;
  nn::MlpParams inner;
};

struct Shutdown {
  std::uint32_t seq = 0;
};

using Message = std::variant<Telemetry, FeatureUpdate, Shutdown>;

/// Dimensions both ends agree on; telemetry payloads are checked against them.
struct Dims {
  int n = 0;
  int m = 0;
  int k = 0;
  std::size_t telemetry_payload() const { return 8u * static_cast<std::size_t>(1 + n + m + k); }
};

enum class DecodeError { BadMagic, BadVersion, Truncated, BadLength, BadCrc, UnknownType, BadPayload };
const char* to_string(DecodeError error);

using DecodeResult = std::variant<Message, DecodeError>;

Frame encode(const Message& msg);
DecodeResult decode(std::span<const std::uint8_t> bytes, const Dims& dims);

// --- Simulated lossy channel --------------------------------------------------

struct ChannelModel {
  double drop = 0.0;        // per-frame drop probability, [0, 1)
  double latency_ms = 0.0;  // fixed delay
  double jitter_ms = 0.0;   // mean of an exponential extra delay
  bool reorder = false;
  std::uint64_t seed = 0;
};

struct Timed {
  Frame frame;
  double time = 0.0;  // seconds
};

/// Applies the channel to frames with non-decreasing send times.
std::vector<Timed> channel_transfer(const ChannelModel& ch, const std::vector<Timed>& sent);

/// One direction of a datagram link. The simulated channel and the UDP
/// transport both implement it.
class DatagramLink {
 public:
  virtual ~DatagramLink() = default;
  virtual void send(const Frame& frame, double t) = 0;
  /// Frames that have arrived by `now`, in arrival order. Never blocks.
  virtual std::vector<Frame> receive(double now) = 0;
};

class SimChannel final : public DatagramLink {
 public:
  explicit SimChannel(ChannelModel model);

  void send(const Frame& frame, double t) override;
  std::vector<Frame> receive(double now) override;

  std::uint64_t sent() const { return sent_; }
  std::uint64_t dropped() const { return dropped_; }
  std::size_t in_flight() const { return pending_.size(); }

 private:
  ChannelModel model_;
  std::mt19937_64 rng_;
  double last_send_ = 0.0;
  double last_arrival_ = 0.0;
  std::uint64_t order_ = 0;
  std::uint64_t sent_ = 0;
  std::uint64_t dropped_ = 0;
  std::multimap<std::pair<double, std::uint64_t>, Frame> pending_;
};

// --- Real datagram transport ----------------------------------------------------

inline constexpr std::size_t kMaxDatagram = 1400;
inline constexpr std::size_t kFragmentHeader = 12;  // "DMRF" | u32 group | u16 index | u16 total

/// Splits a frame into datagrams of at most kMaxDatagram bytes. Frames that
/// already fit are returned unchanged; larger ones become fragments tagged
/// with `group` (the feature version for FeatureUpdate frames).
std::vector<Frame> fragment(const Frame& frame, std::uint32_t group);

/// Reassembles fragments. A fragment of a newer group discards any incomplete
/// older group, so partially received frames are never surfaced.
class Reassembler {
 public:
  std::optional<Frame> push(std::span<const std::uint8_t> datagram);
  std::uint64_t discarded_groups() const { return discarded_; }

 private:
  std::optional<std::uint32_t> group_;
  std::vector<std::optional<Frame>> parts_;
  std::size_t received_ = 0;
  std::uint64_t discarded_ = 0;
};

/// UDP endpoint bound to a local port that sends to a fixed peer. Receive is
/// non-blocking.
class UdpLink final : public DatagramLink {
 public:
  UdpLink(std::uint16_t local_port, std::string peer_host, std::uint16_t peer_port);
  ~UdpLink() override;
  UdpLink(const UdpLink&) = delete;
  UdpLink& operator=(const UdpLink&) = delete;

  void send(const Frame& frame, double t) override;
  std::vector<Frame> receive(double now) override;
  std::uint16_t local_port() const { return local_port_; }

 private:
  int fd_ = -1;
  std::uint16_t local_port_;
  std::string peer_host_;
  std::uint16_t peer_port_;
  std::uint32_t group_ = 0;  // fragment group counter for oversized frames
  Reassembler reassembler_;
};

}  // namespace dmrac::link
