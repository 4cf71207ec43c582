#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "dmrac/crc32.hpp"
#include "dmrac/link.hpp"

using namespace dmrac;
using namespace dmrac::link;

namespace {

const Dims kDims{6, 3, 20};

Telemetry random_telemetry(std::mt19937_64& rng, std::uint32_t seq) {
  std::normal_distribution<double> g(0.0, 1.0);
  Telemetry t;
  t.seq = seq;
  t.t = g(rng);
  t.x = Vector(kDims.n);
  t.nu_ad = Vector(kDims.m);
  t.phi = Vector(kDims.k);
  for (auto* v : {&t.x, &t.nu_ad, &t.phi})
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = g(rng);
  return t;
}

template <typename T>
const T& as(const DecodeResult& r) {
  return std::get<T>(std::get<Message>(r));
}

std::uint32_t read_u32(const Frame& f, std::size_t at) {
  return static_cast<std::uint32_t>(f[at]) | static_cast<std::uint32_t>(f[at + 1]) << 8 |
         static_cast<std::uint32_t>(f[at + 2]) << 16 | static_cast<std::uint32_t>(f[at + 3]) << 24;
}

}  // namespace

TEST_CASE("crc32 check value") {
  const std::string s = "123456789";
  CHECK(crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}) == 0xCBF43926u);
}

TEST_CASE("frame sizes") {
  const Frame shutdown = encode(Shutdown{5});
  CHECK(shutdown.size() == 18);
  CHECK(read_u32(shutdown, 10) == 0);
  CHECK(shutdown[0] == 'D');
  CHECK(shutdown[4] == kWireVersion);

  std::mt19937_64 rng(1);
  const Frame tel = encode(random_telemetry(rng, 3));
  CHECK(kDims.telemetry_payload() == 240);
  CHECK(read_u32(tel, 10) == 240);
  CHECK(tel.size() == 240 + kFrameOverhead);
}

TEST_CASE("round trips") {
  std::mt19937_64 rng(2);
  for (std::uint32_t s = 0; s < 50; ++s) {
    const Telemetry t = random_telemetry(rng, s);
    const Telemetry back = as<Telemetry>(decode(encode(t), kDims));
    CHECK(back.seq == t.seq);
    CHECK(back.t == t.t);
    CHECK(back.x == t.x);
    CHECK(back.nu_ad == t.nu_ad);
    CHECK(back.phi == t.phi);
  }
  nn::MlpParams inner = nn::init(nn::MlpSpec::make_default(6, 3, 20, 4)).inner();
  const FeatureUpdate u = as<FeatureUpdate>(decode(encode(FeatureUpdate{9, inner}), kDims));
  CHECK(u.version == 9);
  CHECK(u.inner.layers == inner.layers);
  CHECK(as<Shutdown>(decode(encode(Shutdown{77}), kDims)).seq == 77);
}

TEST_CASE("decode errors") {
  std::mt19937_64 rng(3);
  const Frame good = encode(random_telemetry(rng, 1));

  Frame flipped = good;
  flipped[kHeaderSize + 17] ^= 0x04;
  CHECK(std::get<DecodeError>(decode(flipped, kDims)) == DecodeError::BadCrc);

  const Frame cut(good.begin(), good.begin() + 30);
  CHECK(std::get<DecodeError>(decode(cut, kDims)) == DecodeError::Truncated);

  Frame magic = good;
  magic[0] = 'X';
  CHECK(std::get<DecodeError>(decode(magic, kDims)) == DecodeError::BadMagic);

  // Telemetry for another shape fails the dimension check.
  CHECK(std::holds_alternative<DecodeError>(decode(good, Dims{6, 3, 8})));
}

TEST_CASE("property: random corruption never yields a bogus message") {
  std::mt19937_64 rng(4);
  const Frame good = encode(random_telemetry(rng, 1));
  std::uniform_int_distribution<std::size_t> pos(0, good.size() - 1);
  std::uniform_int_distribution<int> bit(0, 7);
  for (int trial = 0; trial < 2000; ++trial) {
    Frame f = good;
    f[pos(rng)] ^= static_cast<std::uint8_t>(1u << bit(rng));
    CHECK(std::holds_alternative<DecodeError>(decode(f, kDims)));
  }
}

TEST_CASE("simulated channel") {
  std::vector<Timed> sent;
  for (int i = 0; i < 100; ++i) sent.push_back({encode(Shutdown{static_cast<std::uint32_t>(i)}), i * 0.01});

  ChannelModel fixed;
  fixed.latency_ms = 20.0;
  const auto out = channel_transfer(fixed, sent);
  REQUIRE(out.size() == sent.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].frame == sent[i].frame);
    CHECK(out[i].time == doctest::Approx(sent[i].time + 0.02));
  }

  ChannelModel all_lost;
  all_lost.drop = 1.0;
  CHECK(channel_transfer(all_lost, sent).empty());

  // Binomial(10000, 0.5): mean 5000, sigma 50.
  ChannelModel half;
  half.drop = 0.5;
  half.seed = 8;
  SimChannel ch(half);
  const Frame f = encode(Shutdown{0});
  for (int i = 0; i < 10000; ++i) ch.send(f, i * 1e-3);
  const auto delivered = ch.receive(1e9).size();
  CHECK(std::abs(static_cast<double>(delivered) - 5000.0) <= 150.0);
  CHECK(ch.dropped() + delivered == 10000);
}

TEST_CASE("sim channel holds frames until they arrive") {
  ChannelModel m;
  m.latency_ms = 50.0;
  SimChannel ch(m);
  ch.send(encode(Shutdown{1}), 1.0);
  CHECK(ch.receive(1.04).empty());
  CHECK(ch.receive(1.05).size() == 1);
  CHECK(ch.in_flight() == 0);
}

TEST_CASE("fragmentation and reassembly") {
  nn::MlpParams inner = nn::init(nn::MlpSpec::make_default(6, 3, 20, 4)).inner();
  const Frame big = encode(FeatureUpdate{3, inner});
  REQUIRE(big.size() > kMaxDatagram);
  const auto parts = fragment(big, 3);
  CHECK(parts.size() > 1);
  for (const auto& p : parts) CHECK(p.size() <= kMaxDatagram);

  Reassembler r;
  std::optional<Frame> whole;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) whole = r.push(*it);
  REQUIRE(whole);
  CHECK(*whole == big);

  // A newer group drops an incomplete older one.
  Reassembler r2;
  CHECK_FALSE(r2.push(parts[0]));
  const auto newer = fragment(big, 4);
  std::optional<Frame> got;
  for (const auto& p : newer) got = r2.push(p);
  CHECK(got);
  CHECK(r2.discarded_groups() == 1);
  for (std::size_t i = 1; i < parts.size(); ++i) CHECK_FALSE(r2.push(parts[i]));

  const Frame small = encode(Shutdown{2});
  CHECK(fragment(small, 1) == std::vector<Frame>{small});
}

TEST_CASE("udp loopback") {
  UdpLink receiver(0, "127.0.0.1", 9);
  UdpLink sender(0, "127.0.0.1", receiver.local_port());
  nn::MlpParams inner = nn::init(nn::MlpSpec::make_default(6, 3, 20, 4)).inner();
  const Frame big = encode(FeatureUpdate{1, inner});
  const Frame small = encode(Shutdown{4});
  sender.send(small, 0.0);
  sender.send(big, 0.0);
  std::vector<Frame> got;
  for (int i = 0; i < 200 && got.size() < 2; ++i) {
    for (auto& f : receiver.receive(0.0)) got.push_back(std::move(f));
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  REQUIRE(got.size() == 2);
  CHECK(got[0] == small);
  CHECK(got[1] == big);
}
