#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "dmrac/bytes.hpp"
#include "dmrac/error.hpp"
#include "dmrac/link.hpp"

namespace dmrac::link {

std::vector<Frame> fragment(const Frame& frame, std::uint32_t group) {
  if (frame.size() <= kMaxDatagram) return {frame};
  const std::size_t chunk = kMaxDatagram - kFragmentHeader;
  const std::size_t total = (frame.size() + chunk - 1) / chunk;
  if (total > 0xFFFF) throw Error(Errc::InvalidArgument, "fragment: frame too large");
  std::vector<Frame> out;
  out.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t begin = i * chunk;
    const std::size_t len = std::min(chunk, frame.size() - begin);
    ByteWriter w;
    w.put_tag("DMRF");
    w.put<std::uint32_t>(group);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(i));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(total));
    w.put_bytes(std::span<const std::uint8_t>(frame).subspan(begin, len));
    out.push_back(w.take());
  }
  return out;
}

std::optional<Frame> Reassembler::push(std::span<const std::uint8_t> datagram) {
  ByteReader in(datagram);
  if (datagram.size() < kFragmentHeader || !in.has_tag("DMRF")) return Frame(datagram.begin(), datagram.end());
  const std::uint32_t group = *in.get<std::uint32_t>();
  const std::uint16_t index = *in.get<std::uint16_t>();
  const std::uint16_t total = *in.get<std::uint16_t>();
  if (total == 0 || index >= total) return std::nullopt;

  if (group_ && group < *group_) return std::nullopt;
  if (group_ && group == *group_ && parts_.empty()) return std::nullopt;  // already delivered
  if (!group_ || group > *group_ || parts_.size() != total) {
    if (group_ && received_ > 0 && received_ < parts_.size()) ++discarded_;
    group_ = group;
    parts_.assign(total, std::nullopt);
    received_ = 0;
  }
  if (parts_[index]) return std::nullopt;
  parts_[index] = Frame(datagram.begin() + kFragmentHeader, datagram.end());
  if (++received_ < parts_.size()) return std::nullopt;

  Frame whole;
  for (auto& part : parts_) whole.insert(whole.end(), part->begin(), part->end());
  parts_.clear();
  received_ = 0;
  return whole;
}

UdpLink::UdpLink(std::uint16_t local_port, std::string peer_host, std::uint16_t peer_port)
    : local_port_(local_port), peer_host_(std::move(peer_host)), peer_port_(peer_port) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw Error(Errc::Io, std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(local_port_);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    throw Error(Errc::Io, "bind port " + std::to_string(local_port_) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  local_port_ = ntohs(addr.sin_port);
  ::fcntl(fd_, F_SETFL, ::fcntl(fd_, F_GETFL, 0) | O_NONBLOCK);
}

UdpLink::~UdpLink() {
  if (fd_ >= 0) ::close(fd_);
}

void UdpLink::send(const Frame& frame, double) {
  sockaddr_in peer{};
  peer.sin_family = AF_INET;
  peer.sin_port = htons(peer_port_);
  if (::inet_pton(AF_INET, peer_host_.c_str(), &peer.sin_addr) != 1) {
    throw Error(Errc::Io, "UdpLink: peer host must be an IPv4 address: " + peer_host_);
  }
  const auto datagrams = frame.size() > kMaxDatagram ? fragment(frame, ++group_) : std::vector<Frame>{frame};
  for (const Frame& d : datagrams) {
    // A full socket buffer is just another dropped datagram.
    ::sendto(fd_, d.data(), d.size(), 0, reinterpret_cast<const sockaddr*>(&peer), sizeof peer);
  }
}

std::vector<Frame> UdpLink::receive(double) {
  std::vector<Frame> out;
  std::uint8_t buf[65536];
  for (;;) {
    const ssize_t got = ::recv(fd_, buf, sizeof buf, 0);
    if (got < 0) break;
    if (auto frame = reassembler_.push(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(got)))) {
      out.push_back(std::move(*frame));
    }
  }
  return out;
}

}  // namespace dmrac::link
