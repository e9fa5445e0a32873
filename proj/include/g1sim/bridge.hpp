#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "g1sim/planner.hpp"
#include "g1sim/se3.hpp"
#include "g1sim/sim_world.hpp"

namespace g1sim {

inline constexpr int kDefaultBridgePort = 8078;

// ---------------------------------------------------------------------------
// Joint-command datagram codec.
//
// Little-endian layout, fixed field order:
//   offset 0   magic      4 bytes, "G1JC"
//   offset 4   version    uint8, currently 1
//   offset 5   channel    uint8: 0 rt/arm_sdk, 1 rt/dex3/left/cmd, 2 rt/dex3/right/cmd
//   offset 6   seq        uint32
//   offset 10  joint_count uint8
//   offset 11  normalized joint_count x float32, each in [0,1]
//   then       kp         float32
//   then       kd         float32
// Total size: 19 + 4 * joint_count bytes.
// ---------------------------------------------------------------------------

inline constexpr std::array<std::uint8_t, 4> kPacketMagic = {'G', '1', 'J', 'C'};
inline constexpr std::uint8_t kPacketVersion = 1;
inline constexpr std::size_t kPacketHeaderSize = 11;
inline constexpr std::size_t kPacketTrailerSize = 8;  // kp + kd

enum class Channel : std::uint8_t { ArmSdk = 0, Dex3Left = 1, Dex3Right = 2 };

inline const char* channel_topic(Channel c) {
  switch (c) {
    case Channel::ArmSdk: return "rt/arm_sdk";
    case Channel::Dex3Left: return "rt/dex3/left/cmd";
    case Channel::Dex3Right: return "rt/dex3/right/cmd";
  }
  return "?";
}

struct JointCommandPacket {
  Channel channel = Channel::ArmSdk;
  std::uint32_t seq = 0;
  std::vector<float> normalized;  // [0,1] each, clamped by the sender
  float kp = 60.0f;
  float kd = 1.5f;

  bool operator==(const JointCommandPacket& o) const {
    return channel == o.channel && seq == o.seq && normalized == o.normalized && kp == o.kp &&
           kd == o.kd;
  }
};

inline std::size_t packet_size(std::size_t joint_count) {
  return kPacketHeaderSize + 4 * joint_count + kPacketTrailerSize;
}

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace detail

/// Sender contract: normalized values are clamped into [0,1] here, so hostile
/// or sloppy callers cannot put out-of-range targets on the wire.
inline std::vector<std::uint8_t> encode_packet(const JointCommandPacket& p) {
  if (p.normalized.size() > 255) {
    throw std::invalid_argument("encode_packet: joint_count exceeds uint8");
  }
  if (static_cast<std::uint8_t>(p.channel) > 2) {
    throw std::invalid_argument("encode_packet: channel out of range");
  }
  std::vector<std::uint8_t> out;
  out.reserve(packet_size(p.normalized.size()));
  for (std::uint8_t m : kPacketMagic) out.push_back(m);
  out.push_back(kPacketVersion);
  out.push_back(static_cast<std::uint8_t>(p.channel));
  detail::put_u32(out, p.seq);
  out.push_back(static_cast<std::uint8_t>(p.normalized.size()));
  for (float v : p.normalized) {
    const float clamped = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
    detail::put_f32(out, clamped);
  }
  detail::put_f32(out, p.kp);
  detail::put_f32(out, p.kd);
  return out;
}

enum class DecodeError {
  None,
  LengthMismatch,
  BadMagic,
  UnsupportedVersion,
  BadChannel,
};

inline const char* to_string(DecodeError e) {
  switch (e) {
    case DecodeError::None: return "ok";
    case DecodeError::LengthMismatch: return "length_mismatch";
    case DecodeError::BadMagic: return "bad_magic";
    case DecodeError::UnsupportedVersion: return "unsupported_version";
    case DecodeError::BadChannel: return "bad_channel";
  }
  return "?";
}

struct DecodeResult {
  DecodeError error = DecodeError::None;
  JointCommandPacket packet;  // meaningful iff error == None
};

inline DecodeResult decode_packet(const std::uint8_t* data, std::size_t len) {
  DecodeResult r;
  if (len < kPacketHeaderSize + kPacketTrailerSize) {
    r.error = DecodeError::LengthMismatch;
    return r;
  }
  if (std::memcmp(data, kPacketMagic.data(), 4) != 0) {
    r.error = DecodeError::BadMagic;
    return r;
  }
  if (data[4] != kPacketVersion) {
    r.error = DecodeError::UnsupportedVersion;
    return r;
  }
  if (data[5] > 2) {
    r.error = DecodeError::BadChannel;
    return r;
  }
  const std::uint8_t count = data[10];
  if (len != packet_size(count)) {
    r.error = DecodeError::LengthMismatch;
    return r;
  }
  r.packet.channel = static_cast<Channel>(data[5]);
  r.packet.seq = detail::get_u32(data + 6);
  r.packet.normalized.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    r.packet.normalized[i] = detail::get_f32(data + kPacketHeaderSize + 4 * i);
  }
  r.packet.kp = detail::get_f32(data + kPacketHeaderSize + 4 * count);
  r.packet.kd = detail::get_f32(data + kPacketHeaderSize + 4 * count + 4);
  return r;
}

inline DecodeResult decode_packet(const std::vector<std::uint8_t>& bytes) {
  return decode_packet(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// Denormalization
// ---------------------------------------------------------------------------

struct JointLimits {
  double min = 0.0;
  double max = 0.0;
};

/// theta_i = min_i + bar_i * (max_i - min_i), clamped into the limits, so
/// hostile normalized inputs (bar outside [0,1]) still land in range.
inline JointVector denormalize(const std::vector<double>& bar,
                               const std::vector<JointLimits>& limits) {
  if (bar.size() != limits.size()) {
    throw std::invalid_argument("denormalize: length mismatch");
  }
  JointVector out(bar.size());
  for (std::size_t i = 0; i < bar.size(); ++i) {
    out[i] = std::clamp(limits[i].min + bar[i] * (limits[i].max - limits[i].min), limits[i].min,
                        limits[i].max);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulated robot: unit-inertia PD joints, slewed gripper, kinematic grasp.
// ---------------------------------------------------------------------------

struct RobotConfig {
  KinematicChain chain;              // arm geometry, limits included
  double velocity_limit = 2.0;       // rad/s, enforced every substep
  double gripper_slew = 2.0;         // closure units per second
  double capture_radius = 0.03;      // palm-to-object-axis attach distance
  double close_threshold = 0.8;      // closure crossing that grabs/releases
  double dt = 1.0 / 240.0;           // physics substep
  Channel grasp_hand = Channel::Dex3Right;
};

struct JointState {
  double position = 0.0;
  double velocity = 0.0;
  double target = 0.0;
};

class RobotSim {
 public:
  RobotSim(RobotConfig cfg, const JointVector& initial, const Pose& object_pose,
           const ObjectSpec& object)
      : cfg_(std::move(cfg)), object_(object), object_pose_(object_pose) {
    cfg_.chain.validate();
    object_.validate();
    if (initial.size() != cfg_.chain.dof()) {
      throw std::invalid_argument("RobotSim: initial joint vector length mismatch");
    }
    arm_.resize(cfg_.chain.dof());
    const JointVector clamped = cfg_.chain.clamped(initial);
    for (std::size_t i = 0; i < arm_.size(); ++i) {
      arm_[i].position = clamped[i];
      arm_[i].target = clamped[i];
    }
  }

  void command_arm(const JointVector& targets, double kp, double kd) {
    if (targets.size() != arm_.size()) {
      throw std::invalid_argument("RobotSim::command_arm: target length mismatch");
    }
    const JointVector clamped = cfg_.chain.clamped(targets);
    for (std::size_t i = 0; i < arm_.size(); ++i) arm_[i].target = clamped[i];
    kp_ = kp;
    kd_ = kd;
  }

  /// Hands are a single closure value each; only the configured grasp hand
  /// can attach objects.
  void command_gripper(Channel hand, double closure_target) {
    target_ref(hand) = std::clamp(closure_target, 0.0, 1.0);
  }

  /// One 1/240 s substep: PD acceleration on unit inertia, velocity clamp,
  /// semi-implicit Euler, position clamp (velocity zeroed on contact with a
  /// limit), gripper slew, then attach/detach bookkeeping.
  void step() {
    for (std::size_t i = 0; i < arm_.size(); ++i) {
      JointState& j = arm_[i];
      const double accel = kp_ * (j.target - j.position) - kd_ * j.velocity;
      j.velocity = std::clamp(j.velocity + accel * cfg_.dt, -cfg_.velocity_limit,
                              cfg_.velocity_limit);
      j.position += j.velocity * cfg_.dt;
      const Joint& lim = cfg_.chain.joints[i];
      if (j.position <= lim.theta_min || j.position >= lim.theta_max) {
        j.position = std::clamp(j.position, lim.theta_min, lim.theta_max);
        j.velocity = 0.0;
      }
      max_abs_velocity_ = std::max(max_abs_velocity_, std::abs(j.velocity));
      if (j.position < lim.theta_min || j.position > lim.theta_max) ++limit_violations_;
      if (std::abs(j.velocity) > cfg_.velocity_limit) ++velocity_violations_;
    }

    for (Channel hand : {Channel::Dex3Left, Channel::Dex3Right}) {
      double& closure = closure_ref(hand);
      const double before = closure;
      const double want = target_ref(hand) - closure;
      closure += std::clamp(want, -cfg_.gripper_slew * cfg_.dt, cfg_.gripper_slew * cfg_.dt);
      if (hand == cfg_.grasp_hand) update_attachment(before, closure);
    }

    if (attached_) object_pose_ = palm_pose() * grab_offset_;
    time_ += cfg_.dt;
  }

  Pose palm_pose() const {
    JointVector theta(arm_.size());
    for (std::size_t i = 0; i < arm_.size(); ++i) theta[i] = arm_[i].position;
    return forward_kinematics(cfg_.chain, theta);
  }

  const std::vector<JointState>& arm() const { return arm_; }
  double gripper_closure(Channel hand) const {
    return hand == Channel::Dex3Left ? left_closure_ : right_closure_;
  }
  bool attached() const { return attached_; }
  const Pose& object_pose() const { return object_pose_; }
  double time() const { return time_; }
  const RobotConfig& config() const { return cfg_; }

  // safety-envelope accounting, asserted over whole traces in tests
  double max_abs_velocity_seen() const { return max_abs_velocity_; }
  std::uint64_t limit_violations() const { return limit_violations_; }
  std::uint64_t velocity_violations() const { return velocity_violations_; }

 private:
  double& closure_ref(Channel hand) {
    return hand == Channel::Dex3Left ? left_closure_ : right_closure_;
  }
  double& target_ref(Channel hand) {
    return hand == Channel::Dex3Left ? left_target_ : right_target_;
  }

  /// Distance from the palm point to the object's symmetry-axis segment.
  double palm_to_object_axis() const {
    const Pose palm = palm_pose();
    const Vec3 axis = object_pose_.orientation.rotate({0, 1, 0});
    const Vec3 base = object_pose_.position - axis * (0.5 * object_.height);
    const Vec3 d = palm.position - base;
    const double along = std::clamp(d.dot(axis), 0.0, object_.height);
    return (d - axis * along).norm();
  }

  void update_attachment(double closure_before, double closure_after) {
    const double thr = cfg_.close_threshold;
    if (!attached_ && closure_before < thr && closure_after >= thr &&
        palm_to_object_axis() <= cfg_.capture_radius) {
      attached_ = true;
      grab_offset_ = palm_pose().inverse() * object_pose_;
    } else if (attached_ && closure_before >= thr && closure_after < thr) {
      attached_ = false;  // released: the object stays where it is
    }
  }

  RobotConfig cfg_;
  ObjectSpec object_;
  std::vector<JointState> arm_;
  double kp_ = 60.0;
  double kd_ = 1.5;
  double left_closure_ = 0.0, left_target_ = 0.0;
  double right_closure_ = 0.0, right_target_ = 0.0;
  bool attached_ = false;
  Pose object_pose_;
  Pose grab_offset_;
  double time_ = 0.0;
  double max_abs_velocity_ = 0.0;
  std::uint64_t limit_violations_ = 0;
  std::uint64_t velocity_violations_ = 0;
};

// ---------------------------------------------------------------------------
// Bridge core: decode, drop stale, denormalize, forward to the robot.
// ---------------------------------------------------------------------------

class BridgeCore {
 public:
  struct Counters {
    std::uint64_t applied = 0;
    std::uint64_t stale_dropped = 0;
    std::uint64_t malformed = 0;
  };

  explicit BridgeCore(RobotSim* robot) : robot_(robot) {
    arm_limits_.reserve(robot->config().chain.dof());
    for (const Joint& j : robot->config().chain.joints) {
      arm_limits_.push_back({j.theta_min, j.theta_max});
    }
  }

  /// Applies one datagram. Never throws on wire input: bad packets are
  /// counted and dropped.
  bool handle_datagram(const std::uint8_t* data, std::size_t len) {
    const DecodeResult r = decode_packet(data, len);
    if (r.error != DecodeError::None) {
      ++counters_.malformed;
      return false;
    }
    const JointCommandPacket& p = r.packet;
    const std::size_t expected =
        p.channel == Channel::ArmSdk ? arm_limits_.size() : 1;
    if (p.normalized.size() != expected) {
      ++counters_.malformed;
      return false;
    }
    if (!std::isfinite(p.kp) || !std::isfinite(p.kd)) {
      ++counters_.malformed;
      return false;
    }
    for (float v : p.normalized) {
      if (!std::isfinite(v)) {
        ++counters_.malformed;
        return false;
      }
    }
    auto& last = last_seq_[static_cast<int>(p.channel)];
    if (last && p.seq <= *last) {
      ++counters_.stale_dropped;
      return false;
    }
    last = p.seq;

    std::vector<double> bar(p.normalized.begin(), p.normalized.end());
    if (p.channel == Channel::ArmSdk) {
      robot_->command_arm(denormalize(bar, arm_limits_), p.kp, p.kd);
    } else {
      // hand closure range is [0,1]: denormalization is the identity there
      robot_->command_gripper(p.channel, denormalize(bar, {{0.0, 1.0}})[0]);
    }
    ++counters_.applied;
    return true;
  }

  bool handle_datagram(const std::vector<std::uint8_t>& bytes) {
    return handle_datagram(bytes.data(), bytes.size());
  }

  const Counters& counters() const { return counters_; }

  std::string shutdown_report() const {
    std::ostringstream os;
    os << "bridge: applied=" << counters_.applied << " stale_dropped=" << counters_.stale_dropped
       << " malformed=" << counters_.malformed;
    for (int c = 0; c < 3; ++c) {
      os << " last_seq[" << channel_topic(static_cast<Channel>(c)) << "]=";
      if (last_seq_[c]) {
        os << *last_seq_[c];
      } else {
        os << "none";
      }
    }
    return os.str();
  }

 private:
  RobotSim* robot_;
  std::vector<JointLimits> arm_limits_;
  std::array<std::optional<std::uint32_t>, 3> last_seq_;
  Counters counters_;
};

// ---------------------------------------------------------------------------
// UDP plumbing (IPv4 datagram sockets over the loopback by default).
// ---------------------------------------------------------------------------

class UdpSocket {
 public:
  UdpSocket() {
    fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd_ < 0) throw std::runtime_error("UdpSocket: socket() failed");
  }
  ~UdpSocket() { close(); }
  UdpSocket(UdpSocket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  UdpSocket& operator=(UdpSocket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  /// Binds for receiving; port 0 picks a free port (see bound_port()).
  void bind(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      throw std::runtime_error("UdpSocket: bad host " + host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      throw std::runtime_error("UdpSocket: cannot bind " + host + ":" + std::to_string(port));
    }
  }

  std::uint16_t bound_port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
      throw std::runtime_error("UdpSocket: getsockname failed");
    }
    return ntohs(addr.sin_port);
  }

  void send_to(const std::string& host, std::uint16_t port,
               const std::vector<std::uint8_t>& bytes) const {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      throw std::runtime_error("UdpSocket: bad host " + host);
    }
    const auto sent = ::sendto(fd_, bytes.data(), bytes.size(), 0,
                               reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
    if (sent < 0 || static_cast<std::size_t>(sent) != bytes.size()) {
      throw std::runtime_error("UdpSocket: sendto failed");
    }
  }

  /// Blocks up to timeout_ms for one datagram; nullopt on timeout.
  std::optional<std::vector<std::uint8_t>> recv(int timeout_ms) const {
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, timeout_ms);
    if (ready <= 0) return std::nullopt;
    std::vector<std::uint8_t> buf(2048);
    const auto n = ::recvfrom(fd_, buf.data(), buf.size(), 0, nullptr, nullptr);
    if (n < 0) return std::nullopt;
    buf.resize(static_cast<std::size_t>(n));
    return buf;
  }

  int fd() const { return fd_; }

 private:
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
};

/// Bridge endpoint bound to a UDP port. Lock-step callers pump datagrams
/// inline; the live mode spins a receive thread.
class UdpBridge {
 public:
  UdpBridge(RobotSim* robot, const std::string& host = "127.0.0.1",
            std::uint16_t port = kDefaultBridgePort)
      : core_(robot) {
    socket_.bind(host, port);
  }

  ~UdpBridge() { stop(); }

  std::uint16_t port() const { return socket_.bound_port(); }

  /// Receives and applies one datagram; false on timeout.
  bool pump_one(int timeout_ms) {
    const auto bytes = socket_.recv(timeout_ms);
    if (!bytes) return false;
    core_.handle_datagram(*bytes);
    return true;
  }

  void run_background() {
    running_ = true;
    thread_ = std::thread([this] {
      while (running_) pump_one(50);
    });
  }

  void stop() {
    if (thread_.joinable()) {
      running_ = false;
      thread_.join();
    }
  }

  const BridgeCore& core() const { return core_; }

 private:
  UdpSocket socket_;
  BridgeCore core_;
  std::atomic<bool> running_{false};
  std::thread thread_;
};

/// Command-side endpoint: sequences, clamps and ships normalized targets.
class CommandSender {
 public:
  CommandSender(std::string host, std::uint16_t port) : host_(std::move(host)), port_(port) {}

  std::uint32_t send(Channel channel, const std::vector<double>& normalized, float kp,
                     float kd) {
    JointCommandPacket p;
    p.channel = channel;
    p.seq = ++seq_[static_cast<int>(channel)];
    p.normalized.assign(normalized.begin(), normalized.end());
    p.kp = kp;
    p.kd = kd;
    socket_.send_to(host_, port_, encode_packet(p));
    return p.seq;
  }

 private:
  UdpSocket socket_;
  std::string host_;
  std::uint16_t port_;
  std::array<std::uint32_t, 3> seq_{0, 0, 0};
};

// ---------------------------------------------------------------------------
// Grasp outcome over an execution trace.
// ---------------------------------------------------------------------------

struct ExecutionSample {
  double t = 0.0;
  StageName stage = StageName::PreGraspLift;
  int segment_index = -1;  // polyline segment for glue stages
  bool attached = false;
  double object_z = 0.0;
  Vec3 tool_position;

  bool operator==(const ExecutionSample& o) const {
    return t == o.t && stage == o.stage && segment_index == o.segment_index &&
           attached == o.attached && object_z == o.object_z &&
           tool_position.x == o.tool_position.x && tool_position.y == o.tool_position.y &&
           tool_position.z == o.tool_position.z;
  }
};

struct GraspOutcome {
  bool success = false;
  double lift_height = 0.0;  // peak rise of the object before Release, meters
};

/// Success iff the object was attached during the Lift stage and rose more
/// than 0.05 m above its rest height before the Release stage began.
inline GraspOutcome grasp_outcome(const std::vector<ExecutionSample>& trace,
                                  const ObjectSpec& object) {
  object.validate();
  if (trace.empty()) throw std::invalid_argument("grasp_outcome: empty trace");
  const double rest_z = trace.front().object_z;
  bool attached_during_lift = false;
  double peak = 0.0;
  for (const ExecutionSample& s : trace) {
    if (s.stage == StageName::Release) break;
    if (s.stage == StageName::Lift && s.attached) attached_during_lift = true;
    peak = std::max(peak, s.object_z - rest_z);
  }
  GraspOutcome out;
  out.lift_height = peak;
  out.success = attached_during_lift && peak > 0.05;
  return out;
}

}  // namespace g1sim
