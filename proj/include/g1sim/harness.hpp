#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "g1sim/bridge.hpp"
#include "g1sim/metrics.hpp"
#include "g1sim/planner.hpp"
#include "g1sim/pose_stream.hpp"
#include "g1sim/sim_world.hpp"
#include "g1sim/tracker.hpp"
#include "json.hpp"

namespace g1sim {

// One wiring for every task: the grasp experiment and the glue demo run the
// identical perception -> stream -> plan -> bridge -> robot path and differ
// only in the trajectory template they feed it. Reports carry this tag so
// downstream checks can assert the shared wiring.
inline constexpr const char* kPipelineId = "sim-track-stream-plan-bridge-robot/1";

enum class TaskKind { Grasp, Glue };

struct TaskOptions {
  ScenarioConfig scenario;  // perception scene; object_position is the target
  ObjectSpec object;
  KinematicChain chain = default_arm_chain();
  TaskKind kind = TaskKind::Grasp;
  std::vector<Vec3> glue_edge;  // world vertices, Glue only
  double glue_standoff = 0.06;  // tool height above the edge, meters

  int commands_per_frame = 4;    // 120 Hz command ticks per 30 Hz frame
  int substeps_per_command = 2;  // 240 Hz plant substeps per command tick
  double settle_s = 3.0;         // minimum transit time to the first waypoint
  double tail_s = 1.0;           // hold the last waypoint after t completes
  double lost_abort_s = 5.0;     // continuous LOST budget before aborting
  float kp = 60.0f;
  float kd = 1.5f;
};

inline constexpr double kTransitSpeed = 0.25;     // m/s toward the first waypoint
inline constexpr double kSettleTolerance = 2e-3;  // palm error that ends the settle
// position alone is not enough: the underdamped plant can cross the target at
// speed and ring past it, so the settle also waits for the joints to be still
inline constexpr double kSettleMaxSpeed = 0.02;  // rad/s
inline constexpr double kSettleBudget = 15.0;    // post-transit convergence budget, s

struct PathDeviation {
  double max_mm = 0.0;
  double mean_mm = 0.0;
  long samples = 0;
};

struct TaskReport {
  bool completed = false;
  std::string error;  // empty on success
  std::string pipeline_id = kPipelineId;

  GraspOutcome grasp;  // TaskKind::Grasp
  PathDeviation glue;  // TaskKind::Glue

  int perception_frames = 0;
  int reinit_count = 0;
  double hold_s = 0.0;  // time spent frozen on a LOST stream

  std::uint64_t polls = 0;
  std::uint64_t commands_sent = 0;
  BridgeCore::Counters bridge_counters;

  double max_abs_velocity = 0.0;
  std::uint64_t limit_violations = 0;
  std::uint64_t velocity_violations = 0;

  std::vector<ExecutionSample> trace;  // one sample per 1/240 s substep
};

namespace detail {

inline double point_to_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 == 0.0) return (p - a).norm();
  const double u = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + ab * u)).norm();
}

inline double point_to_polyline(const Vec3& p, const std::vector<Vec3>& poly) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < poly.size(); ++i) {
    best = std::min(best, point_to_segment(p, poly[i - 1], poly[i]));
  }
  return best;
}

}  // namespace detail

/// Runs one manipulation task through the full topology, lock-step on a
/// simulated clock: each 30 Hz perception frame is tracked and published over
/// HTTP, the controller polls it back, then issues 120 Hz UDP joint commands
/// interleaved with 240 Hz plant substeps. Deterministic given (seed, options).
///
/// While the stream reports anything but TRACKING the controller freezes plan
/// time and holds the last setpoint; a continuous outage beyond lost_abort_s
/// aborts the task.
inline TaskReport execute_task(const TaskOptions& opts) {
  TaskReport report;
  opts.scenario.validate();
  opts.object.validate();
  opts.chain.validate();

  ScenarioTracker tracker(opts.scenario, opts.object);
  PoseStreamServer server;
  const int http_port = server.start_ephemeral();
  PosePoller poller(kDefaultStreamHost, http_port);

  RobotConfig robot_cfg;
  robot_cfg.chain = opts.chain;
  const Pose object_start{opts.scenario.object_position, upright_orientation()};
  RobotSim robot(robot_cfg, ready_joints(opts.chain), object_start, opts.object);
  UdpBridge bridge(&robot, "127.0.0.1", 0);
  CommandSender sender("127.0.0.1", bridge.port());

  const double frame_dt = 1.0 / opts.scenario.frame_rate;
  int frame = 0;

  auto finish = [&](bool completed, const std::string& error) {
    report.completed = completed;
    report.error = error;
    report.perception_frames = frame;
    report.reinit_count = tracker.tracker().reinit_count();
    report.bridge_counters = bridge.core().counters();
    report.max_abs_velocity = robot.max_abs_velocity_seen();
    report.limit_violations = robot.limit_violations();
    report.velocity_violations = robot.velocity_violations();
    return report;
  };

  // one perception frame: track, publish, poll the stream back. While the
  // FSM stays in TRACKING across a single failed estimate, the stream keeps
  // mirroring the last believed pose.
  std::optional<Pose> last_believed;
  auto perception_tick = [&]() -> PosePoller::PollResult {
    const TrackerStep s = tracker.step(frame);
    PoseReport rep;
    rep.timestamp = frame * frame_dt;
    rep.frame = frame;
    ObjectTrack track;
    track.id = "object-0";
    track.class_label = opts.object.class_label;
    track.state = s.state;
    if (s.state == TrackerState::Tracking) {
      if (s.pose) last_believed = s.pose;
      track.pose = last_believed;
      track.confidence = 1.0;  // the simulated estimator has no score model
    }
    rep.objects = {track};
    server.publish(rep);
    ++frame;
    ++report.polls;
    return poller.poll_once();
  };

  auto stream_tracking = [](const PosePoller::PollResult& pr) {
    return pr.report && !pr.stale && !pr.report->objects.empty() &&
           pr.report->objects[0].state == TrackerState::Tracking;
  };

  // wait for the stream to carry a registered pose before planning
  PosePoller::PollResult pr;
  const int register_budget = static_cast<int>(10.0 / frame_dt);
  do {
    pr = perception_tick();
  } while (!stream_tracking(pr) && frame < register_budget);
  if (!stream_tracking(pr)) {
    return finish(false, "perception never reached TRACKING within 10 s");
  }

  // plan from the streamed pose, never from simulator internals
  const Pose streamed = *pr.report->objects[0].pose;
  TrajectoryPlan plan;
  try {
    plan = opts.kind == TaskKind::Grasp
               ? plan_grasp(streamed, opts.object, opts.chain)
               : plan_glue_path(opts.glue_edge, opts.glue_standoff, opts.chain);
  } catch (const UnreachableError& e) {
    return finish(false, std::string("unreachable: ") + e.what());
  } catch (const std::invalid_argument& e) {
    return finish(false, std::string("bad plan input: ") + e.what());
  }
  const double total = plan.total_duration();

  JointVector joints = ready_joints(opts.chain);

  // The plant is deliberately underdamped (kd = 1.5 against kp = 60), so a
  // step command to the first waypoint would ring for seconds. Instead the
  // settle phase runs a smoothstep transit from the ready pose and execution
  // starts only once the palm has actually converged.
  const Setpoint first_sp = interpolate(plan, 0.0);
  TrajectoryPlan transit;
  {
    const Pose start_pose = forward_kinematics(opts.chain, joints);
    const double dist = (first_sp.target.position - start_pose.position).norm();
    const Stage& head = plan.stages.front();
    transit.stages = {
        {head.name, head.segment_index, {Waypoint{start_pose, 0.0, 0.0}}},
        {head.name, head.segment_index,
         {Waypoint{first_sp.target, first_sp.gripper,
                   std::max(opts.settle_s, dist / kTransitSpeed)}}}};
  }
  const double transit_total = transit.total_duration();

  Setpoint setpoint = interpolate(transit, 0.0);

  auto command_tick = [&](const Setpoint& sp) -> bool {
    const IkResult ik = ik_solve(opts.chain, sp.target, joints);
    if (!ik.success) return false;
    joints = ik.theta;
    sender.send(Channel::ArmSdk, normalize_joints(joints, opts.chain), opts.kp, opts.kd);
    bridge.pump_one(1000);
    sender.send(Channel::Dex3Right, {sp.gripper}, opts.kp, opts.kd);
    bridge.pump_one(1000);
    report.commands_sent += 2;
    return true;
  };

  auto substeps = [&](const Stage& stage) {
    for (int s = 0; s < opts.substeps_per_command; ++s) {
      robot.step();
      ExecutionSample sample;
      sample.t = robot.time();
      sample.stage = stage.name;
      sample.segment_index = stage.segment_index;
      sample.attached = robot.attached();
      sample.object_z = robot.object_pose().position.z;
      sample.tool_position = robot.palm_pose().position;
      report.trace.push_back(sample);
    }
  };

  double tau = 0.0;
  double transit_tau = 0.0;
  double converge_wait = 0.0;
  double lost_s = 0.0;
  enum class Phase { Settle, Execute, Tail };
  double tail_left = opts.tail_s;
  Phase phase = Phase::Settle;

  while (phase != Phase::Tail || tail_left > 0.0) {
    pr = perception_tick();
    const bool healthy = stream_tracking(pr);
    if (!healthy) {
      lost_s += frame_dt;
      report.hold_s += frame_dt;
      if (lost_s >= opts.lost_abort_s) {
        return finish(false, "stream LOST for " + std::to_string(opts.lost_abort_s) +
                                 " s: aborting");
      }
    } else {
      lost_s = 0.0;
    }

    for (int c = 0; c < opts.commands_per_frame; ++c) {
      const double cmd_dt = frame_dt / opts.commands_per_frame;
      const bool settling = phase == Phase::Settle;
      if (healthy) {
        switch (phase) {
          case Phase::Settle:
            if (transit_tau < transit_total) {
              transit_tau = std::min(transit_tau + cmd_dt, transit_total);
              setpoint = interpolate(transit, transit_tau);
            } else {
              double peak_speed = 0.0;
              for (const JointState& j : robot.arm())
                peak_speed = std::max(peak_speed, std::abs(j.velocity));
              const double palm_err =
                  (robot.palm_pose().position - first_sp.target.position).norm();
              if (palm_err <= kSettleTolerance && peak_speed <= kSettleMaxSpeed) {
                phase = Phase::Execute;
              } else if ((converge_wait += cmd_dt) > kSettleBudget) {
                return finish(false, "plant never settled at the first waypoint");
              }
            }
            break;
          case Phase::Execute:
            tau = std::min(tau + cmd_dt, total);
            setpoint = interpolate(plan, tau);
            if (tau >= total) phase = Phase::Tail;
            break;
          case Phase::Tail:
            tail_left -= cmd_dt;
            break;
        }
      }
      // on an unhealthy stream the last setpoint is held and time stands still
      if (!command_tick(setpoint)) {
        return finish(false, "IK failed to converge during execution");
      }
      substeps(settling ? plan.stages.front() : plan.stage_at(tau));
    }
  }

  if (opts.kind == TaskKind::Grasp) {
    report.grasp = grasp_outcome(report.trace, opts.object);
  } else {
    std::vector<Vec3> offset;
    offset.reserve(opts.glue_edge.size());
    for (const Vec3& v : opts.glue_edge) offset.push_back(v + Vec3{0, 0, opts.glue_standoff});
    double worst = 0.0, sum = 0.0;
    long n = 0;
    for (const ExecutionSample& s : report.trace) {
      // segment 0 is the transit to the first vertex, not part of the path
      if (s.stage != StageName::GlueSegment || s.segment_index < 1) continue;
      const double d = detail::point_to_polyline(s.tool_position, offset);
      worst = std::max(worst, d);
      sum += d;
      ++n;
    }
    report.glue.max_mm = 1e3 * worst;
    report.glue.mean_mm = n > 0 ? 1e3 * sum / static_cast<double>(n) : 0.0;
    report.glue.samples = n;
  }

  return finish(true, "");
}

// ---------------------------------------------------------------------------
// Five-position grasp experiment.
// ---------------------------------------------------------------------------

struct GraspPosition {
  std::string name;
  double x = 0.0;
  double y = 0.0;
};

/// Workspace center plus the four corners of the 20x20 cm square, 70 cm in
/// front of the robot. "front" is the edge nearer the robot, "left" is +y.
inline std::vector<GraspPosition> default_grasp_positions() {
  const double cx = kWorkspaceForward, h = kWorkspaceHalf;
  return {{"center", cx, 0.0},
          {"front-left", cx - h, h},
          {"front-right", cx - h, -h},
          {"rear-left", cx + h, h},
          {"rear-right", cx + h, -h}};
}

struct GraspPositionResult {
  std::string name;
  Vec3 position;
  bool success = false;
  double lift_height_m = 0.0;
  std::string error;
};

struct GraspReport {
  unsigned seed = 0;
  std::string pipeline_id = kPipelineId;
  std::vector<GraspPositionResult> positions;
  int overall_success_count = 0;
  double max_abs_velocity = 0.0;
  std::uint64_t limit_violations = 0;
  std::uint64_t velocity_violations = 0;
};

/// Perception scene for a tabletop task: static object, mild estimator noise
/// at the sub-millimeter calibration, no dropout.
inline ScenarioConfig task_scene(const Vec3& object_position, unsigned seed) {
  ScenarioConfig cfg;
  cfg.kind = ScenarioKind::Static;
  cfg.frame_count = 36000;  // 20 simulated minutes, far beyond any task
  cfg.noise_pos_sigma = 1.05e-3 / std::sqrt(3.0);
  cfg.noise_rot_sigma_deg = 2.0;
  cfg.detection_dropout = 0.0;
  cfg.rng_seed = seed;
  cfg.object_position = object_position;
  return cfg;
}

inline TaskReport run_grasp_task(const GraspPosition& pos, unsigned seed,
                                 const KinematicChain& chain) {
  ObjectSpec object;
  const double mid_z = kDeskHeight + 0.5 * object.height;
  TaskOptions opts;
  opts.scenario = task_scene({pos.x, pos.y, mid_z}, seed);
  opts.object = object;
  opts.chain = chain;
  opts.kind = TaskKind::Grasp;
  return execute_task(opts);
}

inline GraspReport run_grasp_experiment(
    unsigned seed = 7, const KinematicChain& chain = default_arm_chain(),
    const std::vector<GraspPosition>& positions = default_grasp_positions()) {
  GraspReport report;
  report.seed = seed;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    // one seed per placement so the perception streams are independent
    const TaskReport task = run_grasp_task(positions[i], seed + static_cast<unsigned>(i), chain);
    GraspPositionResult r;
    r.name = positions[i].name;
    r.position = {positions[i].x, positions[i].y, kDeskHeight + 0.11};
    r.success = task.completed && task.grasp.success;
    r.lift_height_m = task.grasp.lift_height;
    r.error = task.error;
    if (r.success) ++report.overall_success_count;
    report.positions.push_back(std::move(r));
    report.max_abs_velocity = std::max(report.max_abs_velocity, task.max_abs_velocity);
    report.limit_violations += task.limit_violations;
    report.velocity_violations += task.velocity_violations;
  }
  return report;
}

inline nlohmann::ordered_json grasp_report_to_json(const GraspReport& r) {
  nlohmann::ordered_json j;
  j["experiment"] = "five-position-grasp";
  j["seed"] = r.seed;
  j["pipeline"] = r.pipeline_id;
  j["positions"] = nlohmann::ordered_json::array();
  for (const GraspPositionResult& p : r.positions) {
    nlohmann::ordered_json pj;
    pj["name"] = p.name;
    pj["position"] = {p.position.x, p.position.y, p.position.z};
    pj["success"] = p.success;
    pj["lift_height_m"] = p.lift_height_m;
    pj["error"] = p.error;
    j["positions"].push_back(std::move(pj));
  }
  j["overall_success_count"] = r.overall_success_count;
  j["max_abs_velocity"] = r.max_abs_velocity;
  j["limit_violations"] = r.limit_violations;
  j["velocity_violations"] = r.velocity_violations;
  return j;
}

// ---------------------------------------------------------------------------
// Glue-dispensing demo along a polyline edge.
// ---------------------------------------------------------------------------

struct GlueReport {
  unsigned seed = 0;
  std::string pipeline_id = kPipelineId;
  bool completed = false;
  std::string error;
  std::size_t vertices = 0;
  double standoff_m = 0.0;
  PathDeviation deviation;
  double max_abs_velocity = 0.0;
  std::uint64_t limit_violations = 0;
  std::uint64_t velocity_violations = 0;
};

inline GlueReport run_glue_demo(const std::vector<Vec3>& edge, double standoff = 0.06,
                                unsigned seed = 11,
                                const KinematicChain& chain = default_arm_chain()) {
  TaskOptions opts;
  // same scene machinery as the grasp runs; only the trajectory differs
  opts.scenario = task_scene({kWorkspaceForward, 0.0, kDeskHeight + 0.11}, seed);
  opts.chain = chain;
  opts.kind = TaskKind::Glue;
  opts.glue_edge = edge;
  opts.glue_standoff = standoff;
  const TaskReport task = execute_task(opts);

  GlueReport report;
  report.seed = seed;
  report.completed = task.completed;
  report.error = task.error;
  report.vertices = edge.size();
  report.standoff_m = standoff;
  report.deviation = task.glue;
  report.max_abs_velocity = task.max_abs_velocity;
  report.limit_violations = task.limit_violations;
  report.velocity_violations = task.velocity_violations;
  return report;
}

inline nlohmann::ordered_json glue_report_to_json(const GlueReport& r) {
  nlohmann::ordered_json j;
  j["experiment"] = "glue-path";
  j["seed"] = r.seed;
  j["pipeline"] = r.pipeline_id;
  j["completed"] = r.completed;
  j["error"] = r.error;
  j["vertices"] = r.vertices;
  j["standoff_m"] = r.standoff_m;
  j["max_deviation_mm"] = r.deviation.max_mm;
  j["mean_deviation_mm"] = r.deviation.mean_mm;
  j["path_samples"] = r.deviation.samples;
  j["max_abs_velocity"] = r.max_abs_velocity;
  j["limit_violations"] = r.limit_violations;
  j["velocity_violations"] = r.velocity_violations;
  return j;
}

}  // namespace g1sim
