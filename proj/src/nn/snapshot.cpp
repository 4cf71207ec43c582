#include "dmrac/bytes.hpp"
#include "dmrac/crc32.hpp"
#include "dmrac/nn.hpp"

namespace dmrac::nn {

std::vector<std::uint8_t> encode_snapshot(const MlpParams& params) {
  ByteWriter out;
  out.put_tag("MLPS");
  out.put<std::uint16_t>(kSnapshotFormat);
  out.put<std::uint16_t>(static_cast<std::uint16_t>(params.layers.size()));
  for (const auto& layer : params.layers) {
    out.put<std::uint32_t>(static_cast<std::uint32_t>(layer.weights.rows()));
    out.put<std::uint32_t>(static_cast<std::uint32_t>(layer.weights.cols()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) out.put<double>(layer.weights(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.put<double>(layer.bias(r));
  }
  out.put<std::uint32_t>(crc32(out.bytes()));
  return out.take();
}

MlpParams decode_snapshot(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw Error(Errc::BadFormat, "snapshot: too short");
  const std::size_t body = bytes.size() - sizeof(std::uint32_t);
  {
    ByteReader tail(bytes.subspan(body));
    if (*tail.get<std::uint32_t>() != crc32(bytes.first(body))) {
      throw Error(Errc::BadCrc, "snapshot: checksum mismatch");
    }
  }
  ByteReader in(bytes.first(body));
  if (!in.has_tag("MLPS")) throw Error(Errc::BadFormat, "snapshot: bad magic");
  const auto format = in.get<std::uint16_t>();
  const auto count = in.get<std::uint16_t>();
  if (*format != kSnapshotFormat) throw Error(Errc::BadFormat, "snapshot: unsupported format version");

  MlpParams params;
  for (std::uint16_t l = 0; l < *count; ++l) {
    const auto rows = in.get<std::uint32_t>();
    const auto cols = in.get<std::uint32_t>();
    if (!rows || !cols || *rows == 0 || *cols == 0) throw Error(Errc::BadFormat, "snapshot: bad layer header");
    const std::size_t doubles = static_cast<std::size_t>(*rows) * (*cols) + *rows;
    if (doubles > in.remaining() / sizeof(double)) {
      throw Error(Errc::BadFormat, "snapshot: truncated layer");
    }
    DenseLayer layer{Matrix(*rows, *cols), Vector(*rows)};
    for (std::uint32_t r = 0; r < *rows; ++r)
      for (std::uint32_t c = 0; c < *cols; ++c) layer.weights(r, c) = *in.get<double>();
    for (std::uint32_t r = 0; r < *rows; ++r) layer.bias(r) = *in.get<double>();
    params.layers.push_back(std::move(layer));
  }
  if (in.remaining() != 0) throw Error(Errc::BadFormat, "snapshot: trailing bytes");
  if (!params.all_finite()) throw Error(Errc::BadFormat, "snapshot: non-finite parameters");
  return params;
}

}  // namespace dmrac::nn
