#pragma once

#include "modar/dataio.hpp"
#include "modar/geometry.hpp"

#include <climits>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace modar::sim {

enum class MotionKind { kStationary, kConstantVelocity, kConstantTurn, kStopAndGo, kWaypoints };

struct SpeedSegment {
  double duration_s = 0.0;
  double speed_mps = 0.0;
};

struct TimedPose {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

/// Motion script. Times are seconds since the actor spawned. Stop-and-go
/// segments repeat cyclically; waypoint poses are interpolated linearly and
/// held past either end.
struct Motion {
  MotionKind kind = MotionKind::kStationary;
  double speed_mps = 0.0;
  double yaw_rate_rps = 0.0;
  std::vector<SpeedSegment> segments;
  std::vector<TimedPose> waypoints;

  static Motion stationary() { return {}; }
  static Motion constant_velocity(double speed);
  static Motion constant_turn(double speed, double yaw_rate);
  static Motion stop_and_go(std::vector<SpeedSegment> segments);
  static Motion waypoint_path(std::vector<TimedPose> waypoints);
};

struct KinematicState {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double speed = 0.0;
};

/// Closed-form state of a scripted body `t` seconds after its initial pose.
KinematicState motion_state(const Motion& motion, double x0, double y0, double yaw0, double t);

struct ActorScript {
  ObjectClass object_class = ObjectClass::kVehicle;
  SizeTriple size{4.5, 2.0, 1.6};
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  Motion motion;
  int spawn_frame = 0;
  int despawn_frame = INT_MAX;  // exclusive
};

struct EgoScript {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  Motion motion;
};

struct LidarModel {
  double points_at_10m = 200.0;
  double falloff_exponent = 2.0;
  double noise_sigma = 0.0;
  double max_range = 120.0;
  bool occlusion = true;
  float intensity = 0.5F;
};

struct SceneConfig {
  std::string name = "custom";
  std::vector<ActorScript> actors;
  EgoScript ego;
  LidarModel lidar;
  int frame_count = 1;
  std::uint64_t seed = 0;
};

/// Default sizes recorded in meta.json.
SizeTriple default_size(ObjectClass c);

/// Expected surface samples for a box at BEV range `range` (0 beyond max range).
int expected_point_count(const LidarModel& lidar, double range);

/// Renders the scripted scene at 10 Hz. Throws ConfigError on invalid input.
SequenceDataset simulate(const SceneConfig& config);

enum class Scenario { kOcclusionCorridor, kLongRangeLine, kStationaryLot, kHighwayFast, kMixedCity };

Scenario scenario_from_string(std::string_view name);  // throws UnknownScenario
std::string_view to_string(Scenario s);

SceneConfig scenario_library(Scenario name, std::uint64_t seed);

}  // namespace modar::sim
