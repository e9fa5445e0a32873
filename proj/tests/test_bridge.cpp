#include "g1sim/bridge.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <thread>

#include "g1sim/planner.hpp"
#include "g1sim/rng.hpp"
#include "g1sim/sim_world.hpp"

using namespace g1sim;

namespace {

std::vector<JointLimits> chain_limits(const KinematicChain& chain) {
  std::vector<JointLimits> out;
  for (const Joint& j : chain.joints) out.push_back({j.theta_min, j.theta_max});
  return out;
}

RobotSim make_robot(const JointVector& initial) {
  RobotConfig cfg;
  cfg.chain = default_arm_chain();
  Pose object{{0.70, 0.0, 0.86}, upright_orientation()};
  return RobotSim(cfg, initial, object, ObjectSpec{});
}

RobotSim make_ready_robot() { return make_robot(ready_joints(default_arm_chain())); }

}  // namespace

// --------------------------------------------------------------------------
// codec
// --------------------------------------------------------------------------

TEST(CodecTest, ZeroJointDatagramIsNineteenBytesExactly) {
  JointCommandPacket p;
  p.channel = Channel::Dex3Right;
  p.seq = 0x04030201u;
  p.kp = 60.0f;
  p.kd = 1.5f;
  const std::vector<std::uint8_t> bytes = encode_packet(p);
  ASSERT_EQ(bytes.size(), 19u);
  const std::vector<std::uint8_t> expected = {
      'G',  '1',  'J',  'C',         // magic
      1,                             // version
      2,                             // channel: rt/dex3/right/cmd
      0x01, 0x02, 0x03, 0x04,        // seq, little endian
      0,                             // joint_count
      0x00, 0x00, 0x70, 0x42,        // kp = 60.0f
      0x00, 0x00, 0xc0, 0x3f,        // kd = 1.5f
  };
  EXPECT_EQ(bytes, expected);
}

TEST(CodecTest, PayloadFloatsAreLittleEndianAfterHeader) {
  JointCommandPacket p;
  p.channel = Channel::ArmSdk;
  p.seq = 7;
  p.normalized = {1.0f, 0.5f};
  const std::vector<std::uint8_t> bytes = encode_packet(p);
  ASSERT_EQ(bytes.size(), 19u + 8u);
  // 1.0f = 0x3f800000, 0.5f = 0x3f000000
  EXPECT_EQ(bytes[11], 0x00);
  EXPECT_EQ(bytes[12], 0x00);
  EXPECT_EQ(bytes[13], 0x80);
  EXPECT_EQ(bytes[14], 0x3f);
  EXPECT_EQ(bytes[15], 0x00);
  EXPECT_EQ(bytes[16], 0x00);
  EXPECT_EQ(bytes[17], 0x00);
  EXPECT_EQ(bytes[18], 0x3f);
}

TEST(CodecTest, RoundTripsTenThousandRandomPackets) {
  CounterRng rng(2026, 0, 61);
  for (int i = 0; i < 10000; ++i) {
    JointCommandPacket p;
    p.channel = static_cast<Channel>(rng.next_u64() % 3);
    p.seq = static_cast<std::uint32_t>(rng.next_u64());
    const int count = static_cast<int>(rng.next_u64() % 13);
    for (int j = 0; j < count; ++j) p.normalized.push_back(static_cast<float>(rng.uniform01()));
    p.kp = static_cast<float>(rng.uniform(0.0, 200.0));
    p.kd = static_cast<float>(rng.uniform(0.0, 20.0));
    const DecodeResult r = decode_packet(encode_packet(p));
    ASSERT_EQ(r.error, DecodeError::None) << "iteration " << i;
    ASSERT_TRUE(r.packet == p) << "iteration " << i;
  }
}

TEST(CodecTest, EncodeClampsHostileTargets) {
  JointCommandPacket p;
  p.normalized = {-0.5f, 1.5f, std::numeric_limits<float>::quiet_NaN()};
  const DecodeResult r = decode_packet(encode_packet(p));
  ASSERT_EQ(r.error, DecodeError::None);
  EXPECT_EQ(r.packet.normalized[0], 0.0f);
  EXPECT_EQ(r.packet.normalized[1], 1.0f);
  EXPECT_EQ(r.packet.normalized[2], 0.0f);
}

TEST(CodecTest, RejectsEachCorruption) {
  JointCommandPacket p;
  p.normalized = {0.25f};
  const std::vector<std::uint8_t> good = encode_packet(p);
  ASSERT_EQ(decode_packet(good).error, DecodeError::None);

  std::vector<std::uint8_t> bad = good;
  bad[0] = 'X';
  EXPECT_EQ(decode_packet(bad).error, DecodeError::BadMagic);

  bad = good;
  bad[4] = 2;
  EXPECT_EQ(decode_packet(bad).error, DecodeError::UnsupportedVersion);

  bad = good;
  bad[5] = 3;
  EXPECT_EQ(decode_packet(bad).error, DecodeError::BadChannel);

  bad = good;
  bad.pop_back();
  EXPECT_EQ(decode_packet(bad).error, DecodeError::LengthMismatch);

  bad = good;
  bad.push_back(0);
  EXPECT_EQ(decode_packet(bad).error, DecodeError::LengthMismatch);

  // joint_count promising more floats than the datagram carries
  bad = good;
  bad[10] = 9;
  EXPECT_EQ(decode_packet(bad).error, DecodeError::LengthMismatch);

  EXPECT_EQ(decode_packet(std::vector<std::uint8_t>{}).error, DecodeError::LengthMismatch);
  EXPECT_EQ(decode_packet(std::vector<std::uint8_t>{'G', '1'}).error,
            DecodeError::LengthMismatch);
}

TEST(CodecTest, FuzzedBytesNeverCrashAndAlwaysClassify) {
  CounterRng rng(99, 0, 62);
  int decoded_ok = 0;
  for (int i = 0; i < 100000; ++i) {
    const std::size_t len = rng.next_u64() % 64;
    std::vector<std::uint8_t> bytes(len);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.next_u64());
    // bias some iterations toward nearly-valid packets so deeper checks run
    if (i % 4 == 0 && len >= 6) {
      std::memcpy(bytes.data(), kPacketMagic.data(), 4);
      bytes[4] = kPacketVersion;
      bytes[5] = static_cast<std::uint8_t>(rng.next_u64() % 5);
    }
    const DecodeResult r = decode_packet(bytes);
    if (r.error == DecodeError::None) {
      ++decoded_ok;
      EXPECT_EQ(bytes.size(), packet_size(r.packet.normalized.size()));
    }
  }
  // random bytes may occasionally align into a valid frame; crashing is the
  // only failure mode this guards against
  SUCCEED() << decoded_ok << " fuzz inputs decoded cleanly";
}

TEST(CodecTest, EncodeRejectsOversizedPackets) {
  JointCommandPacket p;
  p.normalized.resize(256, 0.5f);
  EXPECT_THROW(encode_packet(p), std::invalid_argument);
}

// --------------------------------------------------------------------------
// denormalization
// --------------------------------------------------------------------------

TEST(DenormalizeTest, MapsEndpointsAndMidpoint) {
  const std::vector<JointLimits> limits = {{-2.0, 2.0}, {0.0, 1.0}, {-3.0, -1.0}};
  const JointVector theta = denormalize({0.5, 0.0, 1.0}, limits);
  EXPECT_DOUBLE_EQ(theta[0], 0.0);
  EXPECT_DOUBLE_EQ(theta[1], 0.0);
  EXPECT_DOUBLE_EQ(theta[2], -1.0);
}

TEST(DenormalizeTest, ClampsOutOfRangeInputs) {
  const std::vector<JointLimits> limits = {{-1.0, 1.0}, {-1.0, 1.0}};
  const JointVector theta = denormalize({1.2, -0.3}, limits);
  EXPECT_DOUBLE_EQ(theta[0], 1.0);
  EXPECT_DOUBLE_EQ(theta[1], -1.0);
}

TEST(DenormalizeTest, ThrowsOnLengthMismatch) {
  EXPECT_THROW(denormalize({0.5}, {{0.0, 1.0}, {0.0, 1.0}}), std::invalid_argument);
}

TEST(DenormalizeTest, InvertsNormalizationWithinTolerance) {
  const KinematicChain chain = default_arm_chain();
  const std::vector<JointLimits> limits = chain_limits(chain);
  CounterRng rng(7, 0, 63);
  for (int i = 0; i < 1000; ++i) {
    JointVector theta(chain.dof());
    for (std::size_t j = 0; j < theta.size(); ++j) {
      theta[j] = rng.uniform(chain.joints[j].theta_min, chain.joints[j].theta_max);
    }
    const JointVector back = denormalize(normalize_joints(theta, chain), limits);
    for (std::size_t j = 0; j < theta.size(); ++j) {
      EXPECT_NEAR(back[j], theta[j], 1e-9) << "joint " << j;
    }
  }
}

// --------------------------------------------------------------------------
// robot simulation
// --------------------------------------------------------------------------

TEST(RobotSimTest, EquilibriumIsAnExactFixedPoint) {
  RobotSim robot = make_ready_robot();
  const JointVector before = [&] {
    JointVector v;
    for (const JointState& j : robot.arm()) v.push_back(j.position);
    return v;
  }();
  for (int i = 0; i < 240; ++i) robot.step();
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(robot.arm()[i].position, before[i]);
    EXPECT_EQ(robot.arm()[i].velocity, 0.0);
  }
}

TEST(RobotSimTest, VelocityClampEngagesButNeverExceedsLimit) {
  RobotSim robot = make_ready_robot();
  JointVector target = ready_joints(default_arm_chain());
  target[1] += 1.0;  // one radian step on shoulder roll
  robot.command_arm(target, 60.0, 1.5);
  double observed_peak = 0.0;
  for (int i = 0; i < 2 * 240; ++i) {
    robot.step();
    for (const JointState& j : robot.arm()) {
      observed_peak = std::max(observed_peak, std::abs(j.velocity));
      ASSERT_LE(std::abs(j.velocity), 2.0 + 1e-12);
    }
  }
  // with kp=60 a 1 rad error would peak well above 2 rad/s unclamped
  EXPECT_GT(observed_peak, 1.9);
  EXPECT_EQ(robot.velocity_violations(), 0u);
}

TEST(RobotSimTest, UnderdampedStepOvershootsThenConverges) {
  RobotSim robot = make_ready_robot();
  JointVector target = ready_joints(default_arm_chain());
  const double goal = target[3] + 0.8;
  target[3] = goal;
  robot.command_arm(target, 60.0, 1.5);
  double peak = -1e9;
  for (int i = 0; i < 12 * 240; ++i) {
    robot.step();
    peak = std::max(peak, robot.arm()[3].position);
  }
  EXPECT_GT(peak, goal + 0.01) << "kd=1.5 against kp=60 should overshoot";
  EXPECT_NEAR(robot.arm()[3].position, goal, 1e-3);
  EXPECT_NEAR(robot.arm()[3].velocity, 0.0, 1e-3);
}

TEST(RobotSimTest, JointLimitsHoldUnderSaturatingCommands) {
  RobotSim robot = make_ready_robot();
  const KinematicChain chain = default_arm_chain();
  JointVector target(chain.dof());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = chain.joints[i].theta_max + 5.0;
  robot.command_arm(target, 500.0, 0.1);  // hostile gains, saturating targets
  for (int i = 0; i < 4 * 240; ++i) robot.step();
  for (std::size_t i = 0; i < target.size(); ++i) {
    EXPECT_LE(robot.arm()[i].position, chain.joints[i].theta_max);
    EXPECT_GE(robot.arm()[i].position, chain.joints[i].theta_min);
    // commanded targets were clamped to the limit itself
    EXPECT_DOUBLE_EQ(robot.arm()[i].target, chain.joints[i].theta_max);
  }
  EXPECT_EQ(robot.limit_violations(), 0u);
  EXPECT_EQ(robot.velocity_violations(), 0u);
}

TEST(RobotSimTest, GripperSlewsAtTwoPerSecond) {
  RobotSim robot = make_ready_robot();
  robot.command_gripper(Channel::Dex3Right, 1.0);
  for (int i = 0; i < 60; ++i) robot.step();  // 0.25 s
  EXPECT_NEAR(robot.gripper_closure(Channel::Dex3Right), 0.5, 1e-9);
  EXPECT_NEAR(robot.gripper_closure(Channel::Dex3Left), 0.0, 1e-12);
  for (int i = 0; i < 61; ++i) robot.step();
  EXPECT_NEAR(robot.gripper_closure(Channel::Dex3Right), 1.0, 1e-9);
}

namespace {

// joint angles that put the palm on the bottle's axis at grip height
JointVector joints_at(const Vec3& p) {
  const KinematicChain chain = default_arm_chain();
  const IkResult r = ik_solve(chain, Pose{p, Quat::identity()}, ready_joints(chain));
  EXPECT_TRUE(r.success);
  return r.theta;
}

}  // namespace

TEST(RobotSimTest, ClosingNearObjectAttachesAndTracksPalm) {
  const Vec3 grip{0.70, 0.0, 0.86};
  RobotSim robot = make_robot(joints_at(grip));
  EXPECT_FALSE(robot.attached());

  robot.command_gripper(Channel::Dex3Right, 1.0);
  for (int i = 0; i < 240; ++i) robot.step();
  ASSERT_TRUE(robot.attached());
  const double z0 = robot.object_pose().position.z;

  robot.command_arm(joints_at({0.70, 0.0, 0.96}), 60.0, 1.5);
  for (int i = 0; i < 6 * 240; ++i) robot.step();
  EXPECT_TRUE(robot.attached());
  EXPECT_NEAR(robot.object_pose().position.z - z0, 0.10, 0.01);
  // the grab is rigid: relative pose at attach time is preserved
  const Pose rel = robot.palm_pose().inverse() * robot.object_pose();
  EXPECT_NEAR(rel.position.norm(), (grip - Vec3{0.70, 0.0, 0.86}).norm(), 0.02);
}

TEST(RobotSimTest, ClosingFarFromObjectDoesNotAttach) {
  RobotSim robot = make_ready_robot();  // palm nowhere near the bottle
  robot.command_gripper(Channel::Dex3Right, 1.0);
  for (int i = 0; i < 240; ++i) robot.step();
  EXPECT_FALSE(robot.attached());
}

TEST(RobotSimTest, OnlyGraspHandAttaches) {
  RobotSim robot = make_robot(joints_at({0.70, 0.0, 0.86}));
  robot.command_gripper(Channel::Dex3Left, 1.0);
  for (int i = 0; i < 240; ++i) robot.step();
  EXPECT_FALSE(robot.attached());
}

TEST(RobotSimTest, OpeningReleasesAndLeavesObjectInPlace) {
  RobotSim robot = make_robot(joints_at({0.70, 0.0, 0.86}));
  robot.command_gripper(Channel::Dex3Right, 1.0);
  for (int i = 0; i < 240; ++i) robot.step();
  ASSERT_TRUE(robot.attached());

  robot.command_arm(joints_at({0.70, 0.0, 0.96}), 60.0, 1.5);
  for (int i = 0; i < 6 * 240; ++i) robot.step();

  // the object rides the palm until closure actually crosses the threshold
  robot.command_gripper(Channel::Dex3Right, 0.0);
  for (int i = 0; i < 240 && robot.attached(); ++i) robot.step();
  ASSERT_FALSE(robot.attached());
  const Pose released = robot.object_pose();

  // moving the arm afterwards must not drag the released object
  robot.command_arm(ready_joints(default_arm_chain()), 60.0, 1.5);
  for (int i = 0; i < 2 * 240; ++i) robot.step();
  EXPECT_EQ(robot.object_pose().position.x, released.position.x);
  EXPECT_EQ(robot.object_pose().position.y, released.position.y);
  EXPECT_EQ(robot.object_pose().position.z, released.position.z);
}

TEST(RobotSimTest, RejectsMismatchedVectors) {
  RobotSim robot = make_ready_robot();
  EXPECT_THROW(robot.command_arm({0.0, 0.0}, 60.0, 1.5), std::invalid_argument);
  RobotConfig cfg;
  cfg.chain = default_arm_chain();
  EXPECT_THROW(RobotSim(cfg, {0.0}, Pose{}, ObjectSpec{}), std::invalid_argument);
}

// --------------------------------------------------------------------------
// bridge core
// --------------------------------------------------------------------------

namespace {

std::vector<std::uint8_t> arm_packet(std::uint32_t seq, double bar_all, float kp = 60.0f,
                                     float kd = 1.5f) {
  JointCommandPacket p;
  p.channel = Channel::ArmSdk;
  p.seq = seq;
  p.normalized.assign(7, static_cast<float>(bar_all));
  p.kp = kp;
  p.kd = kd;
  return encode_packet(p);
}

std::vector<std::uint8_t> hand_packet(Channel hand, std::uint32_t seq, double bar) {
  JointCommandPacket p;
  p.channel = hand;
  p.seq = seq;
  p.normalized = {static_cast<float>(bar)};
  return encode_packet(p);
}

}  // namespace

TEST(BridgeCoreTest, AppliesFreshAndDropsStaleSequence) {
  RobotSim robot = make_ready_robot();
  BridgeCore core(&robot);
  EXPECT_TRUE(core.handle_datagram(arm_packet(1, 0.5)));
  EXPECT_TRUE(core.handle_datagram(arm_packet(2, 0.6)));
  EXPECT_TRUE(core.handle_datagram(arm_packet(3, 0.7)));
  const double target_after_three = robot.arm()[0].target;

  EXPECT_FALSE(core.handle_datagram(arm_packet(2, 0.1)));  // stale
  EXPECT_FALSE(core.handle_datagram(arm_packet(3, 0.1)));  // equal is stale too
  EXPECT_EQ(robot.arm()[0].target, target_after_three);
  EXPECT_EQ(core.counters().applied, 3u);
  EXPECT_EQ(core.counters().stale_dropped, 2u);
  EXPECT_EQ(core.counters().malformed, 0u);
}

TEST(BridgeCoreTest, SequenceNumbersAreTrackedPerChannel) {
  RobotSim robot = make_ready_robot();
  BridgeCore core(&robot);
  EXPECT_TRUE(core.handle_datagram(arm_packet(5, 0.5)));
  EXPECT_TRUE(core.handle_datagram(hand_packet(Channel::Dex3Right, 1, 0.9)));
  EXPECT_TRUE(core.handle_datagram(hand_packet(Channel::Dex3Left, 1, 0.2)));
  EXPECT_EQ(core.counters().applied, 3u);
  EXPECT_EQ(core.counters().stale_dropped, 0u);
}

TEST(BridgeCoreTest, DenormalizesIntoChainLimits) {
  RobotSim robot = make_ready_robot();
  BridgeCore core(&robot);
  ASSERT_TRUE(core.handle_datagram(arm_packet(1, 0.0)));
  const KinematicChain chain = default_arm_chain();
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    EXPECT_DOUBLE_EQ(robot.arm()[i].target, chain.joints[i].theta_min);
  }
  ASSERT_TRUE(core.handle_datagram(arm_packet(2, 1.0)));
  for (std::size_t i = 0; i < chain.dof(); ++i) {
    EXPECT_DOUBLE_EQ(robot.arm()[i].target, chain.joints[i].theta_max);
  }
}

TEST(BridgeCoreTest, HandPacketSetsGripperTarget) {
  RobotSim robot = make_ready_robot();
  BridgeCore core(&robot);
  ASSERT_TRUE(core.handle_datagram(hand_packet(Channel::Dex3Right, 1, 0.9)));
  for (int i = 0; i < 240; ++i) robot.step();
  // the target crossed the wire as a float32
  EXPECT_DOUBLE_EQ(robot.gripper_closure(Channel::Dex3Right),
                   static_cast<double>(0.9f));
}

TEST(BridgeCoreTest, CountsMalformedWithoutApplying) {
  RobotSim robot = make_ready_robot();
  BridgeCore core(&robot);
  const double t0 = robot.arm()[0].target;

  std::vector<std::uint8_t> ch3 = arm_packet(1, 0.5);
  ch3[5] = 3;
  EXPECT_FALSE(core.handle_datagram(ch3));

  // hand-channel packet carrying seven joints: count/channel mismatch
  JointCommandPacket wrong;
  wrong.channel = Channel::Dex3Left;
  wrong.seq = 1;
  wrong.normalized.assign(7, 0.5f);
  EXPECT_FALSE(core.handle_datagram(encode_packet(wrong)));

  EXPECT_FALSE(core.handle_datagram(arm_packet(1, 0.5, std::nanf(""), 1.5f)));
  EXPECT_FALSE(core.handle_datagram(std::vector<std::uint8_t>{1, 2, 3}));

  EXPECT_EQ(core.counters().malformed, 4u);
  EXPECT_EQ(core.counters().applied, 0u);
  EXPECT_EQ(robot.arm()[0].target, t0);

  // malformed traffic must not burn sequence numbers
  EXPECT_TRUE(core.handle_datagram(arm_packet(1, 0.5)));
}

TEST(BridgeCoreTest, ShutdownReportSummarizesTraffic) {
  RobotSim robot = make_ready_robot();
  BridgeCore core(&robot);
  core.handle_datagram(arm_packet(1, 0.5));
  core.handle_datagram(arm_packet(1, 0.5));
  core.handle_datagram(std::vector<std::uint8_t>{0});
  const std::string report = core.shutdown_report();
  EXPECT_NE(report.find("applied=1"), std::string::npos);
  EXPECT_NE(report.find("stale_dropped=1"), std::string::npos);
  EXPECT_NE(report.find("malformed=1"), std::string::npos);
  EXPECT_NE(report.find("rt/arm_sdk"), std::string::npos);
}

TEST(BridgeCoreTest, HostileDatagramsNeverMoveTargetsOutOfLimits) {
  RobotSim robot = make_ready_robot();
  BridgeCore core(&robot);
  CounterRng rng(5, 0, 64);
  const KinematicChain chain = default_arm_chain();
  for (int i = 0; i < 2000; ++i) {
    std::vector<std::uint8_t> bytes = arm_packet(static_cast<std::uint32_t>(i + 1),
                                                 rng.uniform(-10.0, 10.0));
    // flip a random byte half the time
    if (rng.uniform01() < 0.5 && !bytes.empty()) {
      bytes[rng.next_u64() % bytes.size()] ^= static_cast<std::uint8_t>(rng.next_u64());
    }
    core.handle_datagram(bytes);
    for (std::size_t j = 0; j < chain.dof(); ++j) {
      ASSERT_GE(robot.arm()[j].target, chain.joints[j].theta_min);
      ASSERT_LE(robot.arm()[j].target, chain.joints[j].theta_max);
    }
  }
}

// --------------------------------------------------------------------------
// UDP transport
// --------------------------------------------------------------------------

TEST(UdpTest, LoopbackDatagramReachesTheRobot) {
  RobotSim robot = make_ready_robot();
  UdpBridge bridge(&robot, "127.0.0.1", 0);
  CommandSender sender("127.0.0.1", bridge.port());

  sender.send(Channel::ArmSdk, std::vector<double>(7, 1.0), 60.0f, 1.5f);
  ASSERT_TRUE(bridge.pump_one(1000));
  EXPECT_EQ(bridge.core().counters().applied, 1u);
  const KinematicChain chain = default_arm_chain();
  EXPECT_DOUBLE_EQ(robot.arm()[0].target, chain.joints[0].theta_max);
}

TEST(UdpTest, PumpTimesOutOnSilence) {
  RobotSim robot = make_ready_robot();
  UdpBridge bridge(&robot, "127.0.0.1", 0);
  EXPECT_FALSE(bridge.pump_one(30));
}

TEST(UdpTest, SenderSequencesEachChannelIndependently) {
  RobotSim robot = make_ready_robot();
  UdpBridge bridge(&robot, "127.0.0.1", 0);
  CommandSender sender("127.0.0.1", bridge.port());
  EXPECT_EQ(sender.send(Channel::ArmSdk, std::vector<double>(7, 0.5), 60.0f, 1.5f), 1u);
  EXPECT_EQ(sender.send(Channel::ArmSdk, std::vector<double>(7, 0.5), 60.0f, 1.5f), 2u);
  EXPECT_EQ(sender.send(Channel::Dex3Right, {0.5}, 60.0f, 1.5f), 1u);
  for (int i = 0; i < 3; ++i) ASSERT_TRUE(bridge.pump_one(1000));
  EXPECT_EQ(bridge.core().counters().applied, 3u);
  EXPECT_EQ(bridge.core().counters().stale_dropped, 0u);
}

TEST(UdpTest, BackgroundPumpDrainsTraffic) {
  RobotSim robot = make_ready_robot();
  UdpBridge bridge(&robot, "127.0.0.1", 0);
  bridge.run_background();
  CommandSender sender("127.0.0.1", bridge.port());
  for (int i = 0; i < 20; ++i) {
    sender.send(Channel::ArmSdk, std::vector<double>(7, 0.5), 60.0f, 1.5f);
  }
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (bridge.core().counters().applied < 20 &&
         std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  bridge.stop();
  EXPECT_EQ(bridge.core().counters().applied, 20u);
}

TEST(UdpTest, BindFailsOnOccupiedPort) {
  RobotSim robot = make_ready_robot();
  UdpBridge first(&robot, "127.0.0.1", 0);
  EXPECT_THROW(UdpBridge(&robot, "127.0.0.1", first.port()), std::runtime_error);
}

// --------------------------------------------------------------------------
// grasp outcome
// --------------------------------------------------------------------------

namespace {

std::vector<ExecutionSample> synthetic_trace(bool attach_in_lift, double rise,
                                             double rise_after_release = 0.0) {
  std::vector<ExecutionSample> trace;
  const double rest = 0.86;
  auto push = [&](double t, StageName stage, bool attached, double z) {
    ExecutionSample s;
    s.t = t;
    s.stage = stage;
    s.attached = attached;
    s.object_z = z;
    trace.push_back(s);
  };
  push(0.0, StageName::PreGraspLift, false, rest);
  push(2.0, StageName::Approach, false, rest);
  push(4.0, StageName::Descent, false, rest);
  push(6.0, StageName::GripperClose, attach_in_lift, rest);
  push(8.0, StageName::Lift, attach_in_lift, rest + rise * 0.5);
  push(9.9, StageName::Lift, attach_in_lift, rest + rise);
  push(10.0, StageName::Release, false, rest + rise + rise_after_release);
  return trace;
}

}  // namespace

TEST(GraspOutcomeTest, NominalLiftSucceeds) {
  const GraspOutcome out = grasp_outcome(synthetic_trace(true, 0.12), ObjectSpec{});
  EXPECT_TRUE(out.success);
  EXPECT_NEAR(out.lift_height, 0.12, 1e-12);
}

TEST(GraspOutcomeTest, NeverAttachedFails) {
  const GraspOutcome out = grasp_outcome(synthetic_trace(false, 0.0), ObjectSpec{});
  EXPECT_FALSE(out.success);
  EXPECT_NEAR(out.lift_height, 0.0, 1e-12);
}

TEST(GraspOutcomeTest, ShallowLiftFails) {
  const GraspOutcome out = grasp_outcome(synthetic_trace(true, 0.03), ObjectSpec{});
  EXPECT_FALSE(out.success);
  EXPECT_NEAR(out.lift_height, 0.03, 1e-12);
}

TEST(GraspOutcomeTest, MotionAfterReleaseDoesNotCount) {
  const GraspOutcome out = grasp_outcome(synthetic_trace(true, 0.03, 0.5), ObjectSpec{});
  EXPECT_FALSE(out.success);
  EXPECT_NEAR(out.lift_height, 0.03, 1e-12);
}

TEST(GraspOutcomeTest, EmptyTraceThrows) {
  EXPECT_THROW(grasp_outcome({}, ObjectSpec{}), std::invalid_argument);
}
