#pragma once

#include "bfb/bias.hpp"
#include "bfb/csp.hpp"
#include "bfb/decode.hpp"
#include "bfb/dsp.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace bfb::stream {

// Wire format, little-endian throughout:
//   magic "BFL1" | type u8 | length u32 | payload
// type 0x01 sample:  timestamp u64 (us) + 32 x f32 channel values
// type 0x02 control: timestamp u64 (us) + f32 raw, recentered, biased, angle
// type 0x03 marker:  timestamp u64 (us) + i32 code
constexpr std::array<std::uint8_t, 4> kMagic{'B', 'F', 'L', '1'};
constexpr std::size_t kHeaderSize = 9;
constexpr std::size_t kStreamChannels = 32;

struct SampleFrame {
  std::uint64_t timestamp_us{0};
  std::array<float, kStreamChannels> channels{};
};

struct ControlFrame {
  std::uint64_t timestamp_us{0};
  float raw{0.5f};
  float recentered{0.5f};
  float biased{0.5f};
  float angle{0.0f};
};

struct MarkerFrame {
  std::uint64_t timestamp_us{0};
  std::int32_t code{0};
};

using Frame = std::variant<SampleFrame, ControlFrame, MarkerFrame>;

struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_frame(const Frame& frame);

struct Decoded {
  Frame frame;
  std::size_t consumed{0};
};

// Decodes exactly one frame from the front of the buffer. Returns nullopt
// when more bytes are needed; throws ProtocolError on bad magic, unknown
// type, or a length that does not match the type.
std::optional<Decoded> decode_frame(std::span<const std::uint8_t> buffer);

// Online decode chain fed one sample frame at a time. Emits a control frame
// per 1/16 s of accumulated samples once a full 1 s window is buffered.
class DecodePipeline {
 public:
  DecodePipeline(FilterCoeffs coeffs, SpatialFilterBank bank, ProbabilisticLinearModel model,
                 BiasSpec bias, RecenterState recenter_state, double rate);

  std::optional<ControlFrame> push(const SampleFrame& sample);
  std::size_t samples_seen() const { return samples_seen_; }

 private:
  FilterCoeffs coeffs_;
  FilterState state_;
  SpatialFilterBank bank_;
  ProbabilisticLinearModel model_;
  BiasSpec bias_;
  RecenterState recenter_;
  double rate_;
  int window_len_;
  Matrix window_;  // filtered ring buffer, channels x window_len
  std::size_t samples_seen_{0};
  std::size_t ticks_emitted_{0};
  std::size_t next_tick_at_;
};

// Blocking single-client sample server. The constructor binds and listens
// (port 0 picks an ephemeral port); run() accepts one client, streams the
// columns of `samples` as timestamped sample frames, then closes.
class SampleServer {
 public:
  explicit SampleServer(std::uint16_t port);
  ~SampleServer();
  SampleServer(const SampleServer&) = delete;
  SampleServer& operator=(const SampleServer&) = delete;

  std::uint16_t port() const { return port_; }

  struct Options {
    double rate{250.0};
    bool pace{true};      // sleep to deliver in real time
    int pace_block{25};   // samples per pacing step
  };
  void run(const Matrix& samples, const Options& options);

 private:
  int listen_fd_{-1};
  std::uint16_t port_{0};
};

struct SubscribeResult {
  std::vector<ControlFrame> controls;
  std::size_t sample_frames{0};
  std::size_t marker_frames{0};
  bool clean_eos{false};  // no partial frame pending at disconnect
};

// Connects (with a short retry window), feeds sample frames through the
// pipeline, and returns everything it produced when the producer closes.
SubscribeResult subscribe_and_decode(const std::string& host, std::uint16_t port,
                                     DecodePipeline& pipeline, double connect_timeout_s = 5.0);

}  // namespace bfb::stream
