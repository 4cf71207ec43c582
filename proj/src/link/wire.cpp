#include "dmrac/bytes.hpp"
#include "dmrac/crc32.hpp"
#include "dmrac/link.hpp"
#include "dmrac/overloaded.hpp"

namespace dmrac::link {
namespace {

void put_vector(ByteWriter& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out.put<double>(v(i));
}

Vector get_vector(ByteReader& in, int size) {
  Vector v(size);
  for (int i = 0; i < size; ++i) v(i) = *in.get<double>();
  return v;
}

Frame make_frame(MessageType type, std::uint32_t seq, std::span<const std::uint8_t> payload) {
  ByteWriter out;
  out.put_tag("DMRC");
  out.put<std::uint8_t>(kWireVersion);
  out.put<std::uint8_t>(static_cast<std::uint8_t>(type));
  out.put<std::uint32_t>(seq);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(payload.size()));
  out.put_bytes(payload);
  out.put<std::uint32_t>(crc32(out.bytes()));
  return out.take();
}

}  // namespace

const char* to_string(DecodeError error) {
  switch (error) {
    case DecodeError::BadMagic: return "BadMagic";
    case DecodeError::BadVersion: return "BadVersion";
    case DecodeError::Truncated: return "Truncated";
    case DecodeError::BadLength: return "BadLength";
    case DecodeError::BadCrc: return "BadCrc";
    case DecodeError::UnknownType: return "UnknownType";
    case DecodeError::BadPayload: return "BadPayload";
  }
  return "Unknown";
}

Frame encode(const Message& msg) {
  return std::visit(Overloaded{
                        [](const Telemetry& m) {
                          ByteWriter payload;
                          payload.put<double>(m.t);
                          put_vector(payload, m.x);
                          put_vector(payload, m.nu_ad);
                          put_vector(payload, m.phi);
                          return make_frame(MessageType::Telemetry, m.seq, payload.bytes());
                        },
                        [](const FeatureUpdate& m) {
                          const auto payload = nn::encode_snapshot(m.inner);
                          return make_frame(MessageType::FeatureUpdate, m.version, payload);
                        },
                        [](const Shutdown& m) { return make_frame(MessageType::Shutdown, m.seq, {}); },
                    },
                    msg);
}

DecodeResult decode(std::span<const std::uint8_t> bytes, const Dims& dims) {
  ByteReader in(bytes);
  if (bytes.size() < 4) return DecodeError::Truncated;
  if (!in.has_tag("DMRC")) return DecodeError::BadMagic;
  if (bytes.size() < kHeaderSize) return DecodeError::Truncated;
  if (*in.get<std::uint8_t>() != kWireVersion) return DecodeError::BadVersion;
  const std::uint8_t type = *in.get<std::uint8_t>();
  const std::uint32_t seq = *in.get<std::uint32_t>();
  const std::uint32_t payload_len = *in.get<std::uint32_t>();
  const std::size_t expected = kFrameOverhead + static_cast<std::size_t>(payload_len);
  if (bytes.size() < expected) return DecodeError::Truncated;
  if (bytes.size() > expected) return DecodeError::BadLength;

  const std::size_t body = kHeaderSize + payload_len;
  ByteReader tail(bytes.subspan(body));
  if (*tail.get<std::uint32_t>() != crc32(bytes.first(body))) return DecodeError::BadCrc;

  const auto payload = bytes.subspan(kHeaderSize, payload_len);
  switch (static_cast<MessageType>(type)) {
    case MessageType::Telemetry: {
      if (payload_len != dims.telemetry_payload()) return DecodeError::BadLength;
      ByteReader p(payload);
      Telemetry msg;
      msg.seq = seq;
      msg.t = *p.get<double>();
      msg.x = get_vector(p, dims.n);
      msg.nu_ad = get_vector(p, dims.m);
      msg.phi = get_vector(p, dims.k);
      return Message{std::move(msg)};
    }
    case MessageType::FeatureUpdate: {
      try {
        FeatureUpdate msg{seq, nn::decode_snapshot(payload)};
        msg.inner.version = seq;
        return Message{std::move(msg)};
      } catch (const Error&) {
        return DecodeError::BadPayload;
      }
    }
    case MessageType::Shutdown:
      if (payload_len != 0) return DecodeError::BadLength;
      return Message{Shutdown{seq}};
  }
  return DecodeError::UnknownType;
}

}  // namespace dmrac::link
