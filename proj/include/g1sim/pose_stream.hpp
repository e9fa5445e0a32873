#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "g1sim/se3.hpp"
#include "g1sim/tracker.hpp"

namespace g1sim {

inline constexpr const char* kDefaultStreamHost = "127.0.0.1";
inline constexpr int kDefaultStreamPort = 8077;

/// Wire vocabulary for the tracker state field.
inline const char* state_wire_string(TrackerState s) {
  switch (s) {
    case TrackerState::Uninitialized: return "UNINITIALIZED";
    case TrackerState::Tracking: return "TRACKING";
    case TrackerState::Lost: return "LOST";
  }
  return "UNINITIALIZED";
}

inline std::optional<TrackerState> state_from_wire_string(const std::string& s) {
  if (s == "UNINITIALIZED") return TrackerState::Uninitialized;
  if (s == "TRACKING") return TrackerState::Tracking;
  if (s == "LOST") return TrackerState::Lost;
  return std::nullopt;
}

/// One tracked object in a report. Pose is carried only while TRACKING.
struct ObjectTrack {
  std::string id;
  std::string class_label;
  TrackerState state = TrackerState::Uninitialized;
  std::optional<Pose> pose;
  double confidence = 0.0;

  void validate() const {
    if (pose.has_value() != (state == TrackerState::Tracking)) {
      throw std::invalid_argument("ObjectTrack: pose present iff state is TRACKING");
    }
    if (confidence < 0.0 || confidence > 1.0) {
      throw std::invalid_argument("ObjectTrack: confidence outside [0,1]");
    }
  }

  bool operator==(const ObjectTrack& o) const {
    if (id != o.id || class_label != o.class_label || state != o.state ||
        confidence != o.confidence || pose.has_value() != o.pose.has_value()) {
      return false;
    }
    if (!pose) return true;
    const Pose &a = *pose, &b = *o.pose;
    return a.position.x == b.position.x && a.position.y == b.position.y &&
           a.position.z == b.position.z && a.orientation.w == b.orientation.w &&
           a.orientation.x == b.orientation.x && a.orientation.y == b.orientation.y &&
           a.orientation.z == b.orientation.z;
  }
};

struct PoseReport {
  double timestamp = 0.0;  // seconds on the producing clock
  std::int64_t frame = 0;
  std::vector<ObjectTrack> objects;

  bool operator==(const PoseReport& o) const {
    return timestamp == o.timestamp && frame == o.frame && objects == o.objects;
  }
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// UTF-8 JSON with fixed field order. Doubles print in shortest form that
/// parses back bit-exactly, so serialize/parse round-trips are lossless.
inline std::string serialize_report(const PoseReport& r) {
  using ordered = nlohmann::ordered_json;
  ordered j;
  j["timestamp"] = r.timestamp;
  j["frame"] = r.frame;
  j["objects"] = ordered::array();
  for (const ObjectTrack& t : r.objects) {
    t.validate();
    ordered o;
    o["id"] = t.id;
    o["class_label"] = t.class_label;
    o["state"] = state_wire_string(t.state);
    if (t.pose) {
      o["position"] = {t.pose->position.x, t.pose->position.y, t.pose->position.z};
      o["quaternion"] = {t.pose->orientation.w, t.pose->orientation.x, t.pose->orientation.y,
                         t.pose->orientation.z};
    }
    o["confidence"] = t.confidence;
    j["objects"].push_back(std::move(o));
  }
  return j.dump();
}

inline PoseReport parse_report(const std::string& body) {
  using json = nlohmann::json;
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("top level: expected an object");

  const auto number_at = [&](const json& obj, const char* field, const std::string& where) {
    if (!obj.contains(field)) throw SchemaError(where + field + ": missing");
    if (!obj[field].is_number()) throw SchemaError(where + field + ": expected a number");
    return obj[field].get<double>();
  };

  PoseReport r;
  r.timestamp = number_at(j, "timestamp", "");
  if (!j.contains("frame")) throw SchemaError("frame: missing");
  if (!j["frame"].is_number_integer()) throw SchemaError("frame: expected an integer");
  r.frame = j["frame"].get<std::int64_t>();
  if (!j.contains("objects")) throw SchemaError("objects: missing");
  if (!j["objects"].is_array()) throw SchemaError("objects: expected an array");

  for (const json& o : j["objects"]) {
    if (!o.is_object()) throw SchemaError("objects[]: expected an object");
    ObjectTrack t;
    for (const char* field : {"id", "class_label", "state"}) {
      if (!o.contains(field)) throw SchemaError(std::string("objects[].") + field + ": missing");
      if (!o[field].is_string()) {
        throw SchemaError(std::string("objects[].") + field + ": expected a string");
      }
    }
    t.id = o["id"].get<std::string>();
    t.class_label = o["class_label"].get<std::string>();
    const auto state = state_from_wire_string(o["state"].get<std::string>());
    if (!state) throw SchemaError("objects[].state: unknown value '" + o["state"].get<std::string>() + "'");
    t.state = *state;
    t.confidence = number_at(o, "confidence", "objects[].");
    if (t.confidence < 0.0 || t.confidence > 1.0) {
      throw SchemaError("objects[].confidence: outside [0,1]");
    }

    if (t.state == TrackerState::Tracking) {
      for (const char* field : {"position", "quaternion"}) {
        if (!o.contains(field)) throw SchemaError(std::string("objects[].") + field + ": missing");
      }
      const json& p = o["position"];
      if (!p.is_array() || p.size() != 3 || !p[0].is_number() || !p[1].is_number() ||
          !p[2].is_number()) {
        throw SchemaError("objects[].position: expected [x, y, z]");
      }
      const json& q = o["quaternion"];
      if (!q.is_array() || q.size() != 4 || !q[0].is_number() || !q[1].is_number() ||
          !q[2].is_number() || !q[3].is_number()) {
        throw SchemaError("objects[].quaternion: expected [w, x, y, z]");
      }
      const double qw = q[0].get<double>(), qx = q[1].get<double>(), qy = q[2].get<double>(),
                   qz = q[3].get<double>();
      const double norm = std::sqrt(qw * qw + qx * qx + qy * qy + qz * qz);
      if (std::abs(norm - 1.0) > 1e-3) {
        throw SchemaError("objects[].quaternion: norm " + std::to_string(norm) + " is not unit");
      }
      Pose pose;
      pose.position = {p[0].get<double>(), p[1].get<double>(), p[2].get<double>()};
      if (std::abs(norm - 1.0) > 1e-9) {
        pose.orientation = Quat(qw, qx, qy, qz);  // renormalize sloppy input
      } else {
        // already unit to within the type invariant: keep the exact bits so
        // serialize/parse round-trips are identity
        pose.orientation.w = qw;
        pose.orientation.x = qx;
        pose.orientation.y = qy;
        pose.orientation.z = qz;
      }
      t.pose = pose;
    } else if (o.contains("position") || o.contains("quaternion")) {
      throw SchemaError("objects[].position: forbidden unless state is TRACKING");
    }
    r.objects.push_back(std::move(t));
  }
  return r;
}

/// Latest-snapshot HTTP service: GET /pose returns the most recent complete
/// report. One writer replaces the snapshot; readers always see a whole body.
class PoseStreamServer {
 public:
  PoseStreamServer() {
    // httplib defaults to SO_REUSEPORT, which would let a second service bind
    // an occupied port silently; keep only SO_REUSEADDR so double binds fail
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes),
                 sizeof(yes));
    });
    body_ = std::make_shared<const std::string>(serialize_report(PoseReport{}));
    server_.Get("/pose", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_ptr<const std::string> body;
      {
        std::lock_guard<std::mutex> lock(mutex_);
        body = body_;
      }
      res.set_content(*body, "application/json");
    });
  }

  ~PoseStreamServer() { stop(); }
  PoseStreamServer(const PoseStreamServer&) = delete;
  PoseStreamServer& operator=(const PoseStreamServer&) = delete;

  /// Binds and serves on a background thread. Throws when the port is taken.
  void start(const std::string& host = kDefaultStreamHost, int port = kDefaultStreamPort) {
    if (!server_.bind_to_port(host, port)) {
      throw std::runtime_error("PoseStreamServer: cannot bind " + host + ":" +
                               std::to_string(port));
    }
    port_ = port;
    run_bound(host);
  }

  /// Binds an OS-assigned free port (test-friendly); returns it.
  int start_ephemeral(const std::string& host = kDefaultStreamHost) {
    const int port = server_.bind_to_any_port(host);
    if (port <= 0) throw std::runtime_error("PoseStreamServer: cannot bind " + host);
    port_ = port;
    run_bound(host);
    return port;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  /// Atomically replaces the snapshot. Frames must not go backwards.
  void publish(const PoseReport& r) {
    auto body = std::make_shared<const std::string>(serialize_report(r));
    std::lock_guard<std::mutex> lock(mutex_);
    if (r.frame < report_.frame) {
      throw std::logic_error("PoseStreamServer::publish: frame went backwards");
    }
    report_ = r;
    body_ = std::move(body);
  }

  PoseReport snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return report_;
  }

  int port() const { return port_; }
  std::string url() const { return "http://" + host_ + ":" + std::to_string(port_); }

 private:
  void run_bound(const std::string& host) {
    host_ = host;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  httplib::Server server_;
  std::thread thread_;
  mutable std::mutex mutex_;
  PoseReport report_;
  std::shared_ptr<const std::string> body_;
  std::string host_ = kDefaultStreamHost;
  int port_ = 0;
};

/// Pull side of the stream. Keeps the last good report across transient
/// failures and reports staleness after `stale_after` straight misses.
class PosePoller {
 public:
  struct PollResult {
    bool fresh = false;  // this tick parsed a new body
    bool stale = false;  // stale_after or more consecutive misses
    std::optional<PoseReport> report;  // latest known good report
  };

  PosePoller(const std::string& host, int port, int stale_after = 3)
      : client_(host, port), stale_after_(stale_after) {
    client_.set_connection_timeout(0, 200 * 1000);
    client_.set_read_timeout(0, 200 * 1000);
  }

  PollResult poll_once() {
    if (auto res = client_.Get("/pose"); res && res->status == 200) {
      try {
        PoseReport r = parse_report(res->body);
        last_ = std::move(r);
        failures_ = 0;
        return {true, false, last_};
      } catch (const SchemaError&) {
        // fall through: a malformed body is a failed poll
      }
    }
    ++failures_;
    return {false, failures_ >= stale_after_, last_};
  }

  int consecutive_failures() const { return failures_; }

 private:
  httplib::Client client_;
  int stale_after_;
  std::optional<PoseReport> last_;
  int failures_ = 0;
};

/// Fixed-rate pacing against the wall clock with drift-free absolute
/// scheduling: tick n wakes at start + n/rate.
class RateTimer {
 public:
  explicit RateTimer(double rate_hz) : period_s_(1.0 / rate_hz) {
    if (!(rate_hz > 0.0)) throw std::invalid_argument("RateTimer: rate must be > 0");
    start_ = std::chrono::steady_clock::now();
  }

  void wait_for_tick() {
    ++ticks_;
    const auto target =
        start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                     std::chrono::duration<double>(ticks_ * period_s_));
    std::this_thread::sleep_until(target);
  }

  long ticks() const { return ticks_; }
  double elapsed_s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  double period_s_;
  std::chrono::steady_clock::time_point start_;
  long ticks_ = 0;
};

}  // namespace g1sim
