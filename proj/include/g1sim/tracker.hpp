#pragma once

#include <functional>
#include <optional>
#include <stdexcept>

#include "g1sim/se3.hpp"
#include "g1sim/sim_world.hpp"

namespace g1sim {

enum class TrackerState { Uninitialized, Tracking, Lost };

inline const char* to_string(TrackerState s) {
  switch (s) {
    case TrackerState::Uninitialized: return "uninitialized";
    case TrackerState::Tracking: return "tracking";
    case TrackerState::Lost: return "lost";
  }
  return "?";
}

enum class LostReason { None, ConsecutiveFailures, PoseJump, DetectionTimeout };

inline const char* to_string(LostReason r) {
  switch (r) {
    case LostReason::None: return "none";
    case LostReason::ConsecutiveFailures: return "consecutive_failures";
    case LostReason::PoseJump: return "pose_jump";
    case LostReason::DetectionTimeout: return "detection_timeout";
  }
  return "?";
}

struct TrackerConfig {
  int max_consecutive_failures = 3;
  double max_jump_pos = 0.15;        // meters between consecutive frames
  double max_jump_rot_deg = 90.0;    // degrees between consecutive frames
  double detection_timeout_s = 3.0;  // lost when exceeded with no detection
  double roi_margin = 0.10;          // box expansion per side, fraction of extent
  double frame_rate = 30.0;
  int image_width = kImageWidth;
  int image_height = kImageHeight;

  int timeout_frames() const {
    return static_cast<int>(detection_timeout_s * frame_rate);  // lost when strictly exceeded
  }
};

/// Estimator crop region in pixels.
struct Roi {
  double u_min = 0, v_min = 0, u_max = 0, v_max = 0;
};

/// Detection box grown by `roi_margin` of its extent per side, clamped to the
/// image.
inline Roi roi_from_detection(const Detection& det, const TrackerConfig& cfg) {
  const double mu = cfg.roi_margin * (det.u_max - det.u_min);
  const double mv = cfg.roi_margin * (det.v_max - det.v_min);
  Roi roi;
  roi.u_min = std::clamp(det.u_min - mu, 0.0, static_cast<double>(cfg.image_width - 1));
  roi.u_max = std::clamp(det.u_max + mu, 0.0, static_cast<double>(cfg.image_width - 1));
  roi.v_min = std::clamp(det.v_min - mv, 0.0, static_cast<double>(cfg.image_height - 1));
  roi.v_max = std::clamp(det.v_max + mv, 0.0, static_cast<double>(cfg.image_height - 1));
  return roi;
}

/// One processed frame: state after the step plus whatever was emitted.
struct TrackerStep {
  int frame = 0;
  TrackerState state = TrackerState::Uninitialized;
  std::optional<Pose> pose;  // emitted only on successful estimates
  bool registered = false;   // a registration succeeded this frame
  LostReason lost_reason = LostReason::None;  // set on the transition into Lost
  std::optional<Roi> roi;    // active estimator crop, once a detection exists
};

/// Three-state pose tracking loop.
///
/// Uninitialized/Lost wait for a detection, then register (3-iteration
/// refinement). Tracking refines once per frame against the previous pose and
/// drops to Lost on any of: `max_consecutive_failures` straight failures, a
/// jump above `max_jump_pos` / `max_jump_rot_deg` between consecutive frames,
/// or more than `detection_timeout_s` without any detection.
class PoseTracker {
 public:
  using Estimator =
      std::function<EstimateResult(int frame, EstimateMode, const std::optional<Pose>& prior)>;

  explicit PoseTracker(TrackerConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.max_consecutive_failures < 1 || !(cfg_.frame_rate > 0.0)) {
      throw std::invalid_argument("PoseTracker: bad config");
    }
  }

  TrackerStep step(int frame, const std::optional<Detection>& detection,
                   const Estimator& estimate) {
    if (frame <= last_frame_ && last_frame_ >= 0) {
      throw std::logic_error("PoseTracker::step: frames must be strictly increasing");
    }
    last_frame_ = frame;

    if (detection) {
      roi_ = roi_from_detection(*detection, cfg_);
      last_detection_frame_ = frame;
    }

    TrackerStep out;
    out.frame = frame;
    out.roi = roi_;

    switch (state_) {
      case TrackerState::Uninitialized:
      case TrackerState::Lost:
        if (detection) {
          const EstimateResult r = estimate(frame, EstimateMode::Registration, std::nullopt);
          if (r.success) {
            if (state_ == TrackerState::Lost) ++reinit_count_;
            state_ = TrackerState::Tracking;
            last_pose_ = r.pose;
            consecutive_failures_ = 0;
            out.registered = true;
            out.pose = r.pose;
          }
        }
        break;

      case TrackerState::Tracking: {
        if (last_detection_frame_ >= 0 && frame - last_detection_frame_ > cfg_.timeout_frames()) {
          enter_lost(out, LostReason::DetectionTimeout);
          break;
        }
        const EstimateResult r = estimate(frame, EstimateMode::Tracking, last_pose_);
        if (!r.success) {
          if (++consecutive_failures_ >= cfg_.max_consecutive_failures) {
            enter_lost(out, LostReason::ConsecutiveFailures);
          }
          break;
        }
        const PoseDelta d = pose_delta(*last_pose_, r.pose);
        if (d.d_pos > cfg_.max_jump_pos || d.d_rot_deg > cfg_.max_jump_rot_deg) {
          enter_lost(out, LostReason::PoseJump);
          break;
        }
        consecutive_failures_ = 0;
        last_pose_ = r.pose;
        out.pose = r.pose;
        break;
      }
    }

    out.state = state_;
    return out;
  }

  TrackerState state() const { return state_; }
  int reinit_count() const { return reinit_count_; }
  const std::optional<Pose>& last_pose() const { return last_pose_; }
  const TrackerConfig& config() const { return cfg_; }

 private:
  void enter_lost(TrackerStep& out, LostReason reason) {
    state_ = TrackerState::Lost;
    out.lost_reason = reason;
    consecutive_failures_ = 0;
  }

  TrackerConfig cfg_;
  TrackerState state_ = TrackerState::Uninitialized;
  std::optional<Pose> last_pose_;
  std::optional<Roi> roi_;
  int consecutive_failures_ = 0;
  int last_detection_frame_ = -1;
  int last_frame_ = -1;
  int reinit_count_ = 0;
};

/// Convenience wiring of the tracker onto the simulated detector/estimator.
/// One call per frame; deterministic in (cfg, object, frame history).
class ScenarioTracker {
 public:
  ScenarioTracker(const ScenarioConfig& scenario, const ObjectSpec& object,
                  TrackerConfig tracker_cfg = {})
      : scenario_(scenario),
        object_(object),
        tracker_(with_frame_rate(tracker_cfg, scenario.frame_rate)) {
    scenario_.validate();
    object_.validate();
  }

  TrackerStep step(int frame) {
    const Pose gt = ground_truth(scenario_, object_, frame);
    const auto detection = simulate_detection(scenario_, object_, frame, gt);
    return tracker_.step(frame, detection,
                         [&](int f, EstimateMode mode, const std::optional<Pose>& prior) {
                           return simulate_estimate(scenario_, object_, f, mode, gt, prior);
                         });
  }

  const PoseTracker& tracker() const { return tracker_; }
  const ScenarioConfig& scenario() const { return scenario_; }
  const ObjectSpec& object() const { return object_; }

 private:
  static TrackerConfig with_frame_rate(TrackerConfig cfg, double rate) {
    cfg.frame_rate = rate;
    return cfg;
  }

  ScenarioConfig scenario_;
  ObjectSpec object_;
  PoseTracker tracker_;
};

}  // namespace g1sim
