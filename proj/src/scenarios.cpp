#include "modar/errors.hpp"
#include "modar/rng.hpp"
#include "modar/simkit.hpp"

#include <cmath>
#include <random>
#include <string>

namespace modar::sim {

using geometry::kPi;

namespace {

constexpr std::array<std::pair<Scenario, std::string_view>, 5> kScenarioNames = {{
    {Scenario::kOcclusionCorridor, "OCCLUSION_CORRIDOR"},
    {Scenario::kLongRangeLine, "LONG_RANGE_LINE"},
    {Scenario::kStationaryLot, "STATIONARY_LOT"},
    {Scenario::kHighwayFast, "HIGHWAY_FAST"},
    {Scenario::kMixedCity, "MIXED_CITY"},
}};

ActorScript actor(ObjectClass c, double x, double y, double yaw, Motion motion) {
  ActorScript a;
  a.object_class = c;
  a.size = default_size(c);
  a.x = x;
  a.y = y;
  a.yaw = yaw;
  a.motion = std::move(motion);
  return a;
}

LidarModel base_lidar() {
  LidarModel lidar;
  lidar.points_at_10m = 3000.0;
  lidar.falloff_exponent = 2.0;
  lidar.noise_sigma = 0.02;
  lidar.max_range = 100.0;
  lidar.occlusion = true;
  return lidar;
}

// A wide parked truck hides a vehicle crossing behind it for a few seconds.
SceneConfig occlusion_corridor(std::uint64_t seed) {
  Rng rng(substream_seed(seed, "scenario/occlusion_corridor"));
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  SceneConfig c;
  c.name = "OCCLUSION_CORRIDOR";
  c.seed = seed;
  c.frame_count = 120;
  c.lidar = base_lidar();

  ActorScript truck = actor(ObjectClass::kVehicle, 12.0, 0.0, kPi / 2.0, Motion::stationary());
  truck.size = {10.0, 2.5, 3.2};
  c.actors.push_back(truck);

  const double speed = 6.0 + 0.5 * jitter(rng);
  const double lane_x = 24.0 + 0.5 * jitter(rng);
  // Crosses y = 0 near the middle of the sequence.
  const double start_y = -speed * 6.0 + jitter(rng);
  c.actors.push_back(
      actor(ObjectClass::kVehicle, lane_x, start_y, kPi / 2.0, Motion::constant_velocity(speed)));

  c.actors.push_back(actor(ObjectClass::kPedestrian, 8.0, -9.0 + jitter(rng), 0.0,
                           Motion::constant_velocity(1.2)));
  return c;
}

// Parked vehicles along the road ahead of a driving ego.
SceneConfig long_range_line(std::uint64_t seed) {
  Rng rng(substream_seed(seed, "scenario/long_range_line"));
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  SceneConfig c;
  c.name = "LONG_RANGE_LINE";
  c.seed = seed;
  c.frame_count = 200;
  c.lidar = base_lidar();
  // Sparser returns: cars past 50 m get a few dozen points at most.
  c.lidar.points_at_10m = 1000.0;
  const double ego_speed = 8.0;
  c.ego.motion = Motion::constant_velocity(ego_speed);

  // At the reference frame the first three cars sit at 15, 35 and 60 m.
  const double ref_x = ego_speed * 10.0;
  const double lateral = 4.0;
  for (double range : {15.0, 35.0, 60.0}) {
    const double ahead = std::sqrt(range * range - lateral * lateral);
    c.actors.push_back(actor(ObjectClass::kVehicle, ref_x + ahead, lateral, 0.05 * jitter(rng),
                             Motion::stationary()));
  }
  for (double x : {120.0, 160.0, 185.0, 215.0}) {
    c.actors.push_back(actor(ObjectClass::kVehicle, x + 2.0 * jitter(rng), -lateral,
                             0.05 * jitter(rng), Motion::stationary()));
  }
  return c;
}

// Parked cars in rows; only sensor noise moves them.
SceneConfig stationary_lot(std::uint64_t seed) {
  Rng rng(substream_seed(seed, "scenario/stationary_lot"));
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  SceneConfig c;
  c.name = "STATIONARY_LOT";
  c.seed = seed;
  c.frame_count = 120;
  c.lidar = base_lidar();
  c.lidar.noise_sigma = 0.05;
  for (int row = 0; row < 2; ++row) {
    for (int k = 0; k < 5; ++k) {
      const double x = -16.0 + 8.0 * k + 0.3 * jitter(rng);
      const double y = (row == 0 ? 8.0 : -8.0) + 0.3 * jitter(rng);
      c.actors.push_back(actor(ObjectClass::kVehicle, x, y, kPi / 2.0 + 0.1 * jitter(rng),
                               Motion::stationary()));
    }
  }
  return c;
}

// Multi-lane road with fast traffic in both directions.
SceneConfig highway_fast(std::uint64_t seed) {
  Rng rng(substream_seed(seed, "scenario/highway_fast"));
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  SceneConfig c;
  c.name = "HIGHWAY_FAST";
  c.seed = seed;
  c.frame_count = 120;
  c.lidar = base_lidar();
  const double ego_speed = 12.0;
  c.ego.motion = Motion::constant_velocity(ego_speed);
  const double lanes[] = {-3.5, 3.5, 7.0};
  for (int k = 0; k < 6; ++k) {
    const double lane = lanes[k % 3];
    const double speed = 13.0 + 3.0 * jitter(rng);
    const double x = -10.0 + 15.0 * k + 2.0 * jitter(rng);
    c.actors.push_back(actor(ObjectClass::kVehicle, x, lane, 0.0, Motion::constant_velocity(speed)));
  }
  return c;
}

// All classes and motion types on a city block, including occlusions.
SceneConfig mixed_city(std::uint64_t seed) {
  Rng rng(substream_seed(seed, "scenario/mixed_city"));
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  SceneConfig c;
  c.name = "MIXED_CITY";
  c.seed = seed;
  c.frame_count = 200;
  c.lidar = base_lidar();
  c.ego.motion = Motion::stop_and_go({{4.0, 5.0}, {3.0, 0.0}});

  auto j = [&](double scale) { return scale * jitter(rng); };
  // Parked cars along both curbs.
  for (int k = 0; k < 6; ++k) {
    c.actors.push_back(actor(ObjectClass::kVehicle, 6.0 + 11.0 * k + j(0.5), (k % 2 ? 7.0 : -7.0) + j(0.2),
                             j(0.05), Motion::stationary()));
  }
  // Through traffic.
  c.actors.push_back(actor(ObjectClass::kVehicle, -20.0 + j(2.0), 3.5, 0.0, Motion::constant_velocity(8.0 + j(1.0))));
  c.actors.push_back(actor(ObjectClass::kVehicle, 90.0 + j(2.0), -3.5, kPi, Motion::constant_velocity(7.0 + j(1.0))));
  c.actors.push_back(actor(ObjectClass::kVehicle, 30.0 + j(2.0), 3.5, 0.0,
                           Motion::stop_and_go({{3.0, 6.0}, {2.0, 0.0}})));
  c.actors.push_back(actor(ObjectClass::kVehicle, 40.0 + j(2.0), -20.0, kPi / 2.0,
                           Motion::constant_turn(5.0, 0.15)));
  // Crossing traffic behind parked cars.
  c.actors.push_back(actor(ObjectClass::kVehicle, 28.0 + j(1.0), -40.0, kPi / 2.0, Motion::constant_velocity(6.0)));
  c.actors.push_back(actor(ObjectClass::kVehicle, 50.0 + j(1.0), 40.0, -kPi / 2.0, Motion::constant_velocity(5.0)));
  // Pedestrians on sidewalks, some walking behind parked cars.
  for (int k = 0; k < 4; ++k) {
    const double y = (k % 2 ? 9.5 : -9.5) + j(0.3);
    const double yaw = k < 2 ? 0.0 : kPi;
    c.actors.push_back(actor(ObjectClass::kPedestrian, 5.0 + 14.0 * k + j(1.0), y, yaw,
                             Motion::constant_velocity(1.3 + j(0.2))));
  }
  // Cyclists.
  c.actors.push_back(actor(ObjectClass::kCyclist, 10.0 + j(2.0), 5.5, 0.0, Motion::constant_velocity(4.5 + j(0.5))));
  c.actors.push_back(actor(ObjectClass::kCyclist, 70.0 + j(2.0), -5.5, kPi, Motion::constant_velocity(4.0 + j(0.5))));
  // A pedestrian crossing the road and a cyclist turning off it.
  c.actors.push_back(actor(ObjectClass::kPedestrian, 35.0 + j(2.0), -12.0, kPi / 2.0,
                           Motion::constant_velocity(1.1 + j(0.2))));
  c.actors.push_back(actor(ObjectClass::kCyclist, 20.0 + j(2.0), -2.0, 0.0, Motion::constant_turn(4.0, 0.1)));
  return c;
}

}  // namespace

Scenario scenario_from_string(std::string_view name) {
  for (const auto& [s, n] : kScenarioNames) {
    if (n == name) return s;
  }
  throw UnknownScenario("unknown scenario '" + std::string(name) + "'");
}

std::string_view to_string(Scenario s) {
  for (const auto& [sc, n] : kScenarioNames) {
    if (sc == s) return n;
  }
  return "UNKNOWN";
}

SceneConfig scenario_library(Scenario name, std::uint64_t seed) {
  switch (name) {
    case Scenario::kOcclusionCorridor:
      return occlusion_corridor(seed);
    case Scenario::kLongRangeLine:
      return long_range_line(seed);
    case Scenario::kStationaryLot:
      return stationary_lot(seed);
    case Scenario::kHighwayFast:
      return highway_fast(seed);
    case Scenario::kMixedCity:
      return mixed_city(seed);
  }
  throw UnknownScenario("unknown scenario");
}

}  // namespace modar::sim
