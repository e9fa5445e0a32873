#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "g1sim/se3.hpp"
#include "g1sim/sim_world.hpp"

namespace g1sim {

using JointVector = std::vector<double>;

struct UnreachableError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Joint {
  std::string name;
  Vec3 axis;          // unit, in the parent frame
  Vec3 origin_offset; // joint origin relative to the previous joint, meters
  double theta_min = 0.0;
  double theta_max = 0.0;
};

/// Serial chain. Joint i translates by its origin offset in the parent frame,
/// then rotates about its axis; the tool point hangs off the last frame.
struct KinematicChain {
  std::vector<Joint> joints;
  Pose base_pose;
  Vec3 tool_offset;

  std::size_t dof() const { return joints.size(); }

  void validate() const {
    if (joints.size() < 6) {
      throw std::invalid_argument("KinematicChain: need at least 6 joints for 6-DoF reach");
    }
    for (const Joint& j : joints) {
      if (!(j.theta_min < j.theta_max)) {
        throw std::invalid_argument("KinematicChain: theta_min must be < theta_max for " +
                                    j.name);
      }
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) {
        throw std::invalid_argument("KinematicChain: axis must be unit for " + j.name);
      }
    }
  }

  JointVector clamped(const JointVector& theta) const {
    JointVector out = theta;
    for (std::size_t i = 0; i < joints.size(); ++i) {
      out[i] = std::clamp(out[i], joints[i].theta_min, joints[i].theta_max);
    }
    return out;
  }
};

/// Right-arm chain at desk scale: shoulder cluster, elbow, spherical-ish
/// wrist, tool point in the palm. Limits follow a G1-style arm where known.
inline KinematicChain default_arm_chain() {
  KinematicChain c;
  c.base_pose = {{0.0, -0.17, 1.15}, Quat::identity()};  // right shoulder mount
  c.joints = {
      {"shoulder_pitch", {0, 1, 0}, {0, 0, 0}, -3.0892, 2.6704},
      {"shoulder_roll", {1, 0, 0}, {0, 0, 0}, -2.2515, 1.5882},
      {"shoulder_yaw", {0, 0, 1}, {0, 0, 0}, -2.618, 2.618},
      {"elbow", {0, 1, 0}, {0, 0, -0.48}, -1.0472, 2.0944},
      {"wrist_roll", {0, 0, 1}, {0, 0, -0.48}, -1.9722, 1.9722},
      {"wrist_pitch", {0, 1, 0}, {0, 0, 0}, -1.6144, 1.6144},
      {"wrist_yaw", {1, 0, 0}, {0, 0, 0}, -1.6144, 1.6144},
  };
  c.tool_offset = {0, 0, -0.15};  // palm point below the wrist at zero config
  return c;
}

/// Rest configuration: hand beside the thigh, elbow bent, tool pointing down.
/// Bent joints keep the seed away from the straight-arm singularity, where
/// damped least squares stalls.
inline JointVector ready_joints(const KinematicChain& chain) {
  if (chain.dof() == 7) {
    return chain.clamped({-0.5, -0.2, 0.0, 0.6, 0.0, -0.1, 0.0});
  }
  return chain.clamped(JointVector(chain.dof(), 0.0));
}

inline Pose forward_kinematics(const KinematicChain& chain, const JointVector& theta) {
  if (theta.size() != chain.joints.size()) {
    throw std::invalid_argument("forward_kinematics: joint vector length " +
                                std::to_string(theta.size()) + " does not match chain dof " +
                                std::to_string(chain.joints.size()));
  }
  Pose ee = chain.base_pose;
  for (std::size_t i = 0; i < chain.joints.size(); ++i) {
    const Joint& j = chain.joints[i];
    ee = ee * Pose{j.origin_offset, Quat::from_axis_angle(j.axis, theta[i])};
  }
  return ee * Pose{chain.tool_offset, Quat::identity()};
}

struct IkResult {
  bool success = false;
  JointVector theta;
  double pos_residual = 0.0;      // meters
  double rot_residual_deg = 0.0;  // degrees
  int iterations = 0;
};

/// Damped least-squares IK: lambda = 0.05, at most 200 iterations, stopping
/// at 1 mm position and 2 degrees orientation residual. Joint limits are
/// enforced every iteration; failure to converge reports success = false so
/// the caller can re-seed or skip.
inline IkResult ik_solve(const KinematicChain& chain, const Pose& target,
                         const JointVector& seed) {
  if (seed.size() != chain.joints.size()) {
    throw std::invalid_argument("ik_solve: seed length does not match chain dof");
  }
  if (!target.valid()) throw std::invalid_argument("ik_solve: target must be finite");

  constexpr double kLambda = 0.05;
  constexpr int kMaxIterations = 200;
  constexpr double kPosTol = 1e-3;
  constexpr double kRotTolDeg = 2.0;
  constexpr double kMaxStep = 0.5;  // rad, per-iteration infinity-norm cap

  const int n = static_cast<int>(chain.joints.size());
  JointVector theta = chain.clamped(seed);

  IkResult result;
  for (int iter = 0; iter <= kMaxIterations; ++iter) {
    // forward pass, collecting world-frame joint origins and axes
    std::vector<Vec3> origins(n), axes(n);
    Pose cursor = chain.base_pose;
    for (int i = 0; i < n; ++i) {
      const Joint& j = chain.joints[i];
      cursor = cursor * Pose{j.origin_offset, Quat::from_axis_angle(j.axis, theta[i])};
      origins[i] = cursor.position;
      axes[i] = cursor.orientation.rotate(j.axis);
    }
    const Pose ee = cursor * Pose{chain.tool_offset, Quat::identity()};

    const Vec3 pos_err = target.position - ee.position;
    const Vec3 rot_err =  // world-frame rotation taking ee to target
        (target.orientation * ee.orientation.inverse()).to_rotation_vector();
    result.pos_residual = pos_err.norm();
    result.rot_residual_deg = rad_to_deg(rot_err.norm());
    result.iterations = iter;
    result.theta = theta;
    if (result.pos_residual <= kPosTol && result.rot_residual_deg <= kRotTolDeg) {
      result.success = true;
      return result;
    }
    if (iter == kMaxIterations) break;

    Eigen::Matrix<double, 6, Eigen::Dynamic> J(6, n);
    for (int i = 0; i < n; ++i) {
      const Vec3 lin = axes[i].cross(ee.position - origins[i]);
      J.col(i) << lin.x, lin.y, lin.z, axes[i].x, axes[i].y, axes[i].z;
    }
    Eigen::Matrix<double, 6, 1> e;
    e << pos_err.x, pos_err.y, pos_err.z, rot_err.x, rot_err.y, rot_err.z;

    const Eigen::Matrix<double, 6, 6> A =
        J * J.transpose() + kLambda * kLambda * Eigen::Matrix<double, 6, 6>::Identity();
    const Eigen::VectorXd dtheta = J.transpose() * A.ldlt().solve(e);

    const double step = dtheta.lpNorm<Eigen::Infinity>();
    const double scale = step > kMaxStep ? kMaxStep / step : 1.0;
    for (int i = 0; i < n; ++i) {
      theta[i] = std::clamp(theta[i] + scale * dtheta(i), chain.joints[i].theta_min,
                            chain.joints[i].theta_max);
    }
  }
  return result;  // success = false: unreachable from this seed
}

/// theta_bar_i = (theta_i - min_i) / (max_i - min_i), clamped into [0,1].
inline std::vector<double> normalize_joints(const JointVector& theta,
                                            const KinematicChain& chain) {
  if (theta.size() != chain.joints.size()) {
    throw std::invalid_argument("normalize_joints: length mismatch");
  }
  std::vector<double> out(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const Joint& j = chain.joints[i];
    out[i] = std::clamp((theta[i] - j.theta_min) / (j.theta_max - j.theta_min), 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectory plans
// ---------------------------------------------------------------------------

struct Waypoint {
  Pose target;
  double gripper = 0.0;   // 0 open, 1 closed
  double duration = 0.0;  // seconds to reach this waypoint from the previous one

  bool operator==(const Waypoint& o) const {
    return target.position.x == o.target.position.x &&
           target.position.y == o.target.position.y &&
           target.position.z == o.target.position.z &&
           target.orientation.w == o.target.orientation.w &&
           target.orientation.x == o.target.orientation.x &&
           target.orientation.y == o.target.orientation.y &&
           target.orientation.z == o.target.orientation.z && gripper == o.gripper &&
           duration == o.duration;
  }
};

enum class StageName {
  PreGraspLift,
  Approach,
  Descent,
  GripperClose,
  Lift,
  Release,
  GlueSegment,
};

inline const char* to_string(StageName s) {
  switch (s) {
    case StageName::PreGraspLift: return "pre_grasp_lift";
    case StageName::Approach: return "approach";
    case StageName::Descent: return "descent";
    case StageName::GripperClose: return "gripper_close";
    case StageName::Lift: return "lift";
    case StageName::Release: return "release";
    case StageName::GlueSegment: return "glue_segment";
  }
  return "?";
}

struct Stage {
  StageName name = StageName::GlueSegment;
  int segment_index = -1;  // vertex index for glue stages, -1 for grasp stages
  std::vector<Waypoint> waypoints;

  bool operator==(const Stage& o) const {
    return name == o.name && segment_index == o.segment_index && waypoints == o.waypoints;
  }
};

struct Setpoint {
  Pose target;
  double gripper = 0.0;
};

struct TrajectoryPlan {
  std::vector<Stage> stages;

  bool operator==(const TrajectoryPlan& o) const { return stages == o.stages; }

  std::vector<const Waypoint*> flat_waypoints() const {
    std::vector<const Waypoint*> out;
    for (const Stage& s : stages) {
      for (const Waypoint& w : s.waypoints) out.push_back(&w);
    }
    return out;
  }

  /// Sum of segment durations; the first waypoint anchors t = 0.
  double total_duration() const {
    const auto wps = flat_waypoints();
    double total = 0.0;
    for (std::size_t k = 1; k < wps.size(); ++k) total += wps[k]->duration;
    return total;
  }

  /// Stage holding the waypoint that segment time t is heading toward.
  const Stage& stage_at(double t) const;
};

inline double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

/// Plan state at time t: position lerped, orientation slerped and gripper
/// blended with s = 3u^2 - 2u^3 inside each waypoint segment.
inline Setpoint interpolate(const TrajectoryPlan& plan, double t) {
  const auto wps = plan.flat_waypoints();
  if (wps.empty()) throw std::invalid_argument("interpolate: empty plan");
  if (t < 0.0 || t > plan.total_duration() + 1e-12) {
    throw std::out_of_range("interpolate: t outside [0, plan duration]");
  }
  if (wps.size() == 1) return {wps[0]->target, wps[0]->gripper};

  double seg_start = 0.0;
  for (std::size_t k = 1; k < wps.size(); ++k) {
    const double seg_end = seg_start + wps[k]->duration;
    if (t <= seg_end || k + 1 == wps.size()) {
      const Waypoint &a = *wps[k - 1], &b = *wps[k];
      const double u = std::clamp((t - seg_start) / b.duration, 0.0, 1.0);
      const double s = smoothstep(u);
      Setpoint out;
      out.target.position = lerp(a.target.position, b.target.position, s);
      out.target.orientation =
          Quat::slerp_shortest(a.target.orientation, b.target.orientation, s);
      out.gripper = a.gripper + (b.gripper - a.gripper) * s;
      return out;
    }
    seg_start = seg_end;
  }
  return {wps.back()->target, wps.back()->gripper};
}

inline const Stage& TrajectoryPlan::stage_at(double t) const {
  if (stages.empty()) throw std::invalid_argument("stage_at: empty plan");
  double elapsed = 0.0;
  bool first = true;
  for (const Stage& s : stages) {
    for (const Waypoint& w : s.waypoints) {
      if (first) {
        first = false;  // the opening waypoint anchors t = 0
        continue;
      }
      elapsed += w.duration;
      if (t <= elapsed) return s;
    }
  }
  return stages.back();
}

namespace detail {

inline void require_reachable(const KinematicChain& chain, const TrajectoryPlan& plan) {
  JointVector seed = ready_joints(chain);
  for (const Waypoint* w : plan.flat_waypoints()) {
    const IkResult r = ik_solve(chain, w->target, seed);
    if (!r.success) {
      std::ostringstream msg;
      msg << "waypoint (" << w->target.position.x << ", " << w->target.position.y << ", "
          << w->target.position.z << ") unreachable: residual " << r.pos_residual * 1e3
          << " mm / " << r.rot_residual_deg << " deg";
      throw UnreachableError(msg.str());
    }
    seed = r.theta;  // warm start the next waypoint
  }
}

}  // namespace detail

inline constexpr double kStagingClearance = 0.15;  // above the object top
inline constexpr double kApproachClearance = 0.10;
inline constexpr double kLiftHeight = 0.10;  // > the 0.05 m success threshold
inline constexpr double kStageDuration = 2.0;

/// Vertical yaw-free grasp of an upright cylinder: the tool approach axis
/// stays aligned with world -z, so the plan depends on the object pose only
/// through its position (rotations about the symmetry axis change nothing).
inline TrajectoryPlan plan_grasp(const Pose& object_pose, const ObjectSpec& object,
                                 const KinematicChain& chain) {
  object.validate();
  chain.validate();
  const Vec3 p = object_pose.position;
  const double top_z = p.z + 0.5 * object.height;
  const Quat down = Quat::identity();  // tool points down at identity

  const auto wp = [&](double z, double gripper) {
    return Waypoint{{{p.x, p.y, z}, down}, gripper, kStageDuration};
  };

  TrajectoryPlan plan;
  plan.stages = {
      {StageName::PreGraspLift, -1, {wp(top_z + kStagingClearance, 0.0)}},
      {StageName::Approach, -1, {wp(top_z + kApproachClearance, 0.0)}},
      {StageName::Descent, -1, {wp(p.z, 0.0)}},  // grasp at mid-height
      {StageName::GripperClose, -1, {wp(p.z, 1.0)}},
      {StageName::Lift, -1, {wp(p.z + kLiftHeight, 1.0)}},
      {StageName::Release, -1, {wp(p.z + kLiftHeight, 0.0)}},
  };
  detail::require_reachable(chain, plan);
  return plan;
}

inline constexpr double kGlueSpeed = 0.03;       // m/s along the edge
inline constexpr double kGlueMinSegmentS = 1.0;  // floor for very short edges

/// One waypoint per polyline vertex at `standoff` above the surface, constant
/// tool-down orientation, gripper held closed around the glue stick.
inline TrajectoryPlan plan_glue_path(const std::vector<Vec3>& edge, double standoff,
                                     const KinematicChain& chain) {
  if (edge.size() < 2) {
    throw std::invalid_argument("plan_glue_path: polyline needs at least 2 vertices");
  }
  chain.validate();
  TrajectoryPlan plan;
  for (std::size_t i = 0; i < edge.size(); ++i) {
    Waypoint w;
    w.target = {edge[i] + Vec3{0, 0, standoff}, Quat::identity()};
    w.gripper = 1.0;
    w.duration =
        i == 0 ? kStageDuration
               : std::max(kGlueMinSegmentS, (edge[i] - edge[i - 1]).norm() / kGlueSpeed);
    plan.stages.push_back({StageName::GlueSegment, static_cast<int>(i), {w}});
  }
  detail::require_reachable(chain, plan);
  return plan;
}

// ---------------------------------------------------------------------------
// Plain-text chain and polyline files
// ---------------------------------------------------------------------------
//
// Chain file, one directive per line ('#' comments):
//   base <x> <y> <z>
//   joint <name> <axis_x> <axis_y> <axis_z> <off_x> <off_y> <off_z> <min> <max>
//   tool <x> <y> <z>
// Polyline file: one "x y z" vertex per line ('#' comments).

inline KinematicChain parse_chain(std::istream& in) {
  KinematicChain chain;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string directive;
    if (!(ls >> directive)) continue;
    const auto bad = [&](const char* why) {
      throw std::runtime_error("chain file line " + std::to_string(line_no) + ": " + why);
    };
    if (directive == "base") {
      if (!(ls >> chain.base_pose.position.x >> chain.base_pose.position.y >>
            chain.base_pose.position.z)) {
        bad("expected 'base x y z'");
      }
    } else if (directive == "joint") {
      Joint j;
      if (!(ls >> j.name >> j.axis.x >> j.axis.y >> j.axis.z >> j.origin_offset.x >>
            j.origin_offset.y >> j.origin_offset.z >> j.theta_min >> j.theta_max)) {
        bad("expected 'joint name ax ay az ox oy oz min max'");
      }
      chain.joints.push_back(j);
    } else if (directive == "tool") {
      if (!(ls >> chain.tool_offset.x >> chain.tool_offset.y >> chain.tool_offset.z)) {
        bad("expected 'tool x y z'");
      }
    } else {
      bad("unknown directive");
    }
  }
  chain.validate();
  return chain;
}

inline KinematicChain load_chain(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open chain file: " + path);
  return parse_chain(in);
}

inline std::vector<Vec3> parse_polyline(std::istream& in) {
  std::vector<Vec3> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    Vec3 v;
    if (!(ls >> v.x)) continue;  // blank or comment-only line
    if (!(ls >> v.y >> v.z)) {
      throw std::runtime_error("polyline file line " + std::to_string(line_no) +
                               ": expected 'x y z'");
    }
    out.push_back(v);
  }
  return out;
}

inline std::vector<Vec3> load_polyline(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open polyline file: " + path);
  return parse_polyline(in);
}

}  // namespace g1sim
