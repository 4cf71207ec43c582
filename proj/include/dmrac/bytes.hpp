#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace dmrac {

static_assert(std::endian::native == std::endian::little,
              "wire and snapshot encoders assume a little-endian host");

/// Appends little-endian scalars to a growing byte vector.
class ByteWriter {
 public:
  void put_tag(std::string_view tag) {
    bytes_.insert(bytes_.end(), tag.begin(), tag.end());
  }
  template <typename T>
  void put(T value) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    bytes_.insert(bytes_.end(), raw, raw + sizeof(T));
  }
  void put_bytes(std::span<const std::uint8_t> data) {
    bytes_.insert(bytes_.end(), data.begin(), data.end());
  }
  std::size_t size() const { return bytes_.size(); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; every getter returns nullopt past the end.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  bool has_tag(std::string_view tag) {
    if (remaining() < tag.size()) return false;
    if (std::memcmp(data_.data() + pos_, tag.data(), tag.size()) != 0) return false;
    pos_ += tag.size();
    return true;
  }
  template <typename T>
  std::optional<T> get() {
    if (remaining() < sizeof(T)) return std::nullopt;
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace dmrac
