#include "bfb/stream.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <thread>

namespace bfb::stream {

namespace {

constexpr std::size_t kSamplePayload = 8 + kStreamChannels * 4;
constexpr std::size_t kControlPayload = 8 + 4 * 4;
constexpr std::size_t kMarkerPayload = 8 + 4;
constexpr double kControlTicksPerSecond = 16.0;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

float get_f32(const std::uint8_t* p) {
  const std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void send_all(int fd, const std::uint8_t* data, std::size_t len) {
  std::size_t sent = 0;
  while (sent < len) {
    const ssize_t n = ::send(fd, data + sent, len - sent, MSG_NOSIGNAL);
    if (n <= 0) throw std::runtime_error("stream: send failed");
    sent += static_cast<std::size_t>(n);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  if (const auto* s = std::get_if<SampleFrame>(&frame)) {
    out.push_back(0x01);
    put_u32(out, kSamplePayload);
    put_u64(out, s->timestamp_us);
    for (float v : s->channels) put_f32(out, v);
  } else if (const auto* c = std::get_if<ControlFrame>(&frame)) {
    if (!(c->raw >= 0.0f && c->raw <= 1.0f && c->recentered >= 0.0f && c->recentered <= 1.0f &&
          c->biased >= 0.0f && c->biased <= 1.0f))
      throw ProtocolError("encode_frame: control outputs must be in [0,1]");
    if (!(c->angle >= -45.0f && c->angle <= 45.0f))
      throw ProtocolError("encode_frame: angle must be in [-45,45]");
    out.push_back(0x02);
    put_u32(out, kControlPayload);
    put_u64(out, c->timestamp_us);
    put_f32(out, c->raw);
    put_f32(out, c->recentered);
    put_f32(out, c->biased);
    put_f32(out, c->angle);
  } else {
    const auto& m = std::get<MarkerFrame>(frame);
    out.push_back(0x03);
    put_u32(out, kMarkerPayload);
    put_u64(out, m.timestamp_us);
    put_u32(out, static_cast<std::uint32_t>(m.code));
  }
  return out;
}

std::optional<Decoded> decode_frame(std::span<const std::uint8_t> buffer) {
  if (buffer.size() < kHeaderSize) return std::nullopt;
  if (!std::equal(kMagic.begin(), kMagic.end(), buffer.begin()))
    throw ProtocolError("decode_frame: bad magic");
  const std::uint8_t type = buffer[4];
  const std::uint32_t length = get_u32(buffer.data() + 5);

  std::size_t expected;
  switch (type) {
    case 0x01: expected = kSamplePayload; break;
    case 0x02: expected = kControlPayload; break;
    case 0x03: expected = kMarkerPayload; break;
    default: throw ProtocolError("decode_frame: unknown frame type");
  }
  if (length != expected) throw ProtocolError("decode_frame: bad payload length");
  if (buffer.size() < kHeaderSize + length) return std::nullopt;  // need more bytes

  const std::uint8_t* p = buffer.data() + kHeaderSize;
  Decoded out;
  out.consumed = kHeaderSize + length;
  if (type == 0x01) {
    SampleFrame s;
    s.timestamp_us = get_u64(p);
    for (std::size_t c = 0; c < kStreamChannels; ++c) s.channels[c] = get_f32(p + 8 + 4 * c);
    out.frame = s;
  } else if (type == 0x02) {
    ControlFrame c;
    c.timestamp_us = get_u64(p);
    c.raw = get_f32(p + 8);
    c.recentered = get_f32(p + 12);
    c.biased = get_f32(p + 16);
    c.angle = get_f32(p + 20);
    out.frame = c;
  } else {
    MarkerFrame m;
    m.timestamp_us = get_u64(p);
    m.code = static_cast<std::int32_t>(get_u32(p + 8));
    out.frame = m;
  }
  return out;
}

DecodePipeline::DecodePipeline(FilterCoeffs coeffs, SpatialFilterBank bank,
                               ProbabilisticLinearModel model, BiasSpec bias,
                               RecenterState recenter_state, double rate)
    : coeffs_(std::move(coeffs)),
      state_(FilterState::zero(coeffs_, kStreamChannels)),
      bank_(std::move(bank)),
      model_(std::move(model)),
      bias_(bias),
      recenter_(recenter_state),
      rate_(rate),
      window_len_(static_cast<int>(std::lround(rate))),
      window_(Matrix::Zero(kStreamChannels, window_len_)) {
  next_tick_at_ = static_cast<std::size_t>(window_len_);
}

std::optional<ControlFrame> DecodePipeline::push(const SampleFrame& sample) {
  SampleBlock one;
  one.rate = rate_;
  one.data.resize(kStreamChannels, 1);
  for (std::size_t c = 0; c < kStreamChannels; ++c)
    one.data(static_cast<int>(c), 0) = static_cast<double>(sample.channels[c]);
  const SampleBlock filtered = filter_stream(coeffs_, state_, one);

  // Ring write position cycles through the window buffer. Window features
  // (variance per channel) are order-invariant, so the ring never needs
  // unrolling.
  window_.col(static_cast<int>(samples_seen_ % static_cast<std::size_t>(window_len_))) =
      filtered.data.col(0);
  ++samples_seen_;

  if (samples_seen_ < next_tick_at_) return std::nullopt;

  const SampleBlock virtual_block{bank_.filters * window_, rate_};
  const Vector feature = band_power(virtual_block);
  ControlFrame out;
  out.timestamp_us = sample.timestamp_us;
  const double raw = classify(model_, feature);
  const double recentered = recenter(raw, recenter_);
  const double biased = apply_bias(bias_, recentered);
  out.raw = static_cast<float>(raw);
  out.recentered = static_cast<float>(recentered);
  out.biased = static_cast<float>(biased);
  out.angle = static_cast<float>((biased - 0.5) * 90.0);

  ++ticks_emitted_;
  next_tick_at_ = static_cast<std::size_t>(window_len_) +
                  static_cast<std::size_t>(std::llround(static_cast<double>(ticks_emitted_) *
                                                        rate_ / kControlTicksPerSecond));
  return out;
}

SampleServer::SampleServer(std::uint16_t port) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("stream: socket failed");
  int reuse = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &reuse, sizeof(reuse));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(listen_fd_);
    throw std::runtime_error("stream: bind failed");
  }
  if (::listen(listen_fd_, 1) != 0) {
    ::close(listen_fd_);
    throw std::runtime_error("stream: listen failed");
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

SampleServer::~SampleServer() {
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void SampleServer::run(const Matrix& samples, const Options& options) {
  if (samples.rows() != static_cast<int>(kStreamChannels))
    throw std::invalid_argument("SampleServer: expected 32-channel samples");
  const int fd = ::accept(listen_fd_, nullptr, nullptr);
  if (fd < 0) throw std::runtime_error("stream: accept failed");
  int nodelay = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &nodelay, sizeof(nodelay));

  const auto start = std::chrono::steady_clock::now();
  try {
    std::vector<std::uint8_t> chunk;
    for (int t = 0; t < samples.cols(); ++t) {
      SampleFrame frame;
      frame.timestamp_us =
          static_cast<std::uint64_t>(std::llround(1e6 * static_cast<double>(t) / options.rate));
      for (std::size_t c = 0; c < kStreamChannels; ++c)
        frame.channels[c] = static_cast<float>(samples(static_cast<int>(c), t));
      const std::vector<std::uint8_t> bytes = encode_frame(frame);
      chunk.insert(chunk.end(), bytes.begin(), bytes.end());

      const bool flush = (t + 1) % options.pace_block == 0 || t + 1 == samples.cols();
      if (flush) {
        send_all(fd, chunk.data(), chunk.size());
        chunk.clear();
        if (options.pace) {
          const auto target =
              start + std::chrono::microseconds(
                          static_cast<std::int64_t>(1e6 * (t + 1.0) / options.rate));
          std::this_thread::sleep_until(target);
        }
      }
    }
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::shutdown(fd, SHUT_WR);
  ::close(fd);
}

SubscribeResult subscribe_and_decode(const std::string& host, std::uint16_t port,
                                     DecodePipeline& pipeline, double connect_timeout_s) {
  int fd = -1;
  const auto deadline =
      std::chrono::steady_clock::now() +
      std::chrono::milliseconds(static_cast<std::int64_t>(1000 * connect_timeout_s));
  for (;;) {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw std::runtime_error("stream: socket failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd);
      throw std::invalid_argument("stream: bad host address");
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) break;
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline)
      throw std::runtime_error("stream: connect timed out");
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }

  SubscribeResult result;
  std::vector<std::uint8_t> buffer;
  std::array<std::uint8_t, 4096> chunk;
  for (;;) {
    const ssize_t n = ::recv(fd, chunk.data(), chunk.size(), 0);
    if (n < 0) {
      ::close(fd);
      throw std::runtime_error("stream: recv failed");
    }
    if (n == 0) break;  // producer closed
    buffer.insert(buffer.end(), chunk.begin(), chunk.begin() + n);

    std::size_t offset = 0;
    for (;;) {
      std::optional<Decoded> decoded;
      try {
        decoded = decode_frame(std::span<const std::uint8_t>(buffer).subspan(offset));
      } catch (...) {
        ::close(fd);
        throw;
      }
      if (!decoded) break;
      offset += decoded->consumed;
      if (const auto* s = std::get_if<SampleFrame>(&decoded->frame)) {
        ++result.sample_frames;
        if (auto control = pipeline.push(*s)) result.controls.push_back(*control);
      } else if (std::holds_alternative<MarkerFrame>(decoded->frame)) {
        ++result.marker_frames;
      }
    }
    buffer.erase(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(offset));
  }
  ::close(fd);
  // A partial frame at disconnect is discarded by contract.
  result.clean_eos = buffer.empty();
  return result;
}

}  // namespace bfb::stream
