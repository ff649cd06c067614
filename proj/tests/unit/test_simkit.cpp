#include "modar/errors.hpp"
#include "modar/simkit.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace modar::sim {
namespace {

using geometry::kPi;

ActorScript parked(double x, double y, SizeTriple size = {4.5, 2.0, 1.6}) {
  ActorScript a;
  a.size = size;
  a.x = x;
  a.y = y;
  return a;
}

SceneConfig single_frame(std::vector<ActorScript> actors) {
  SceneConfig c;
  c.actors = std::move(actors);
  c.lidar.points_at_10m = 200.0;
  c.lidar.noise_sigma = 0.0;
  c.frame_count = 1;
  return c;
}

TEST(PointBudget, InverseSquareFalloff) {
  LidarModel lidar;
  lidar.points_at_10m = 200.0;
  EXPECT_EQ(expected_point_count(lidar, 10.0), 200);
  EXPECT_EQ(expected_point_count(lidar, 20.0), 50);
  EXPECT_EQ(expected_point_count(lidar, 500.0), 0);
}

TEST(Simulate, LoneBoxGetsItsBudget) {
  const auto ds = simulate(single_frame({parked(10.0, 0.0)}));
  ASSERT_EQ(ds.frames.size(), 1U);
  const auto& gt = ds.frames[0].gt_boxes.at(0);
  EXPECT_EQ(gt.num_points_inside, 200);
  EXPECT_EQ(ds.frames[0].points.size(), 200U);
  EXPECT_DOUBLE_EQ(gt.occluded_fraction, 0.0);
  for (const LidarPoint& p : ds.frames[0].points) {
    EXPECT_TRUE(geometry::contains(gt.box, Vec3(p.x, p.y, p.z), 1e-6));
  }

  const auto far = simulate(single_frame({parked(20.0, 0.0)}));
  EXPECT_EQ(far.frames[0].gt_boxes.at(0).num_points_inside, 50);
}

TEST(Simulate, FullShadowLeavesNoPoints) {
  // A tall wide wall between the sensor and the car.
  const auto ds = simulate(single_frame({parked(8.0, 0.0, {1.0, 12.0, 4.0}), parked(20.0, 0.0)}));
  const auto& hidden = ds.frames[0].gt_boxes.at(1);
  EXPECT_EQ(hidden.num_points_inside, 0);
  EXPECT_DOUBLE_EQ(hidden.occluded_fraction, 1.0);
}

TEST(Simulate, DeterministicForSeed) {
  SceneConfig c = scenario_library(Scenario::kMixedCity, 4);
  c.frame_count = 15;
  EXPECT_EQ(simulate(c), simulate(c));
  SceneConfig other = c;
  other.seed = 5;
  EXPECT_NE(simulate(c).frames.back().points, simulate(other).frames.back().points);
}

TEST(Simulate, OutputIsValid) {
  for (Scenario s : {Scenario::kOcclusionCorridor, Scenario::kLongRangeLine, Scenario::kStationaryLot,
                     Scenario::kHighwayFast, Scenario::kMixedCity}) {
    SceneConfig c = scenario_library(s, 1);
    c.frame_count = 10;
    const auto ds = simulate(c);
    EXPECT_NO_THROW(validate(ds)) << to_string(s);
    EXPECT_EQ(ds.frames.size(), 10U);
  }
}

TEST(Simulate, RejectsBadConfig) {
  SceneConfig c = single_frame({parked(10.0, 0.0, {0.0, 2.0, 1.6})});
  EXPECT_THROW(simulate(c), ConfigError);
}

TEST(Simulate, SpawnWindowLimitsGt) {
  ActorScript a = parked(10.0, 0.0);
  a.spawn_frame = 2;
  a.despawn_frame = 4;
  SceneConfig c = single_frame({a});
  c.frame_count = 6;
  const auto ds = simulate(c);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(ds.frames[static_cast<std::size_t>(i)].gt_boxes.size(), (i >= 2 && i < 4) ? 1U : 0U) << i;
  }
}

TEST(MotionState, ClosedForms) {
  const auto cv = motion_state(Motion::constant_velocity(2.0), 1.0, 0.0, kPi / 2, 3.0);
  EXPECT_NEAR(cv.x, 1.0, 1e-12);
  EXPECT_NEAR(cv.y, 6.0, 1e-12);

  // Half a circle of radius v / w.
  const auto turn = motion_state(Motion::constant_turn(1.0, 1.0), 0.0, 0.0, 0.0, kPi);
  EXPECT_NEAR(turn.x, 0.0, 1e-9);
  EXPECT_NEAR(turn.y, 2.0, 1e-9);
  EXPECT_NEAR(std::abs(turn.yaw), kPi, 1e-9);

  const auto sg = motion_state(Motion::stop_and_go({{1.0, 2.0}, {1.0, 0.0}}), 0.0, 0.0, 0.0, 3.5);
  EXPECT_NEAR(sg.x, 4.0, 1e-9);
  EXPECT_NEAR(sg.speed, 0.0, 1e-12);

  const auto wp = motion_state(Motion::waypoint_path({{0.0, 0.0, 0.0, 0.0}, {2.0, 4.0, 0.0, 0.0}}),
                               0.0, 0.0, 0.0, 1.0);
  EXPECT_NEAR(wp.x, 2.0, 1e-12);
}

TEST(Scenarios, StationaryLotNeverMoves) {
  const auto ds = simulate(scenario_library(Scenario::kStationaryLot, 2));
  for (const Frame& f : ds.frames) {
    for (const GtBox& gt : f.gt_boxes) EXPECT_EQ(gt.speed_mps, 0.0);
  }
}

TEST(Scenarios, HighwayHasFastActor) {
  const auto ds = simulate(scenario_library(Scenario::kHighwayFast, 2));
  std::map<std::int64_t, double> slowest;
  for (const Frame& f : ds.frames) {
    for (const GtBox& gt : f.gt_boxes) {
      auto [it, fresh] = slowest.try_emplace(gt.track_id, gt.speed_mps);
      if (!fresh) it->second = std::min(it->second, gt.speed_mps);
    }
  }
  bool any = false;
  for (const auto& [id, v] : slowest) any = any || v >= 10.0;
  EXPECT_TRUE(any);
}

TEST(Scenarios, CorridorActorDisappearsAndReturns) {
  const auto ds = simulate(scenario_library(Scenario::kOcclusionCorridor, 7));
  // Track 1 is the crossing car; it must be seen, fully hidden, then seen again.
  std::vector<double> trace;
  for (const Frame& f : ds.frames) {
    for (const GtBox& gt : f.gt_boxes) {
      if (gt.track_id == 1) trace.push_back(gt.occluded_fraction);
    }
  }
  ASSERT_FALSE(trace.empty());
  const auto hidden = std::find(trace.begin(), trace.end(), 1.0);
  ASSERT_NE(hidden, trace.end());
  EXPECT_TRUE(std::any_of(trace.begin(), hidden, [](double o) { return o < 0.5; }));
  EXPECT_TRUE(std::any_of(hidden, trace.end(), [](double o) { return o < 0.5; }));
}

TEST(ScenarioNames, RoundTripAndUnknown) {
  EXPECT_EQ(scenario_from_string("HIGHWAY_FAST"), Scenario::kHighwayFast);
  EXPECT_EQ(to_string(Scenario::kLongRangeLine), "LONG_RANGE_LINE");
  EXPECT_THROW(scenario_from_string("DESERT"), UnknownScenario);
}

}  // namespace
}  // namespace modar::sim
