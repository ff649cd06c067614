#include "modar/errors.hpp"
#include "modar/modar_points.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

namespace modar::points {
namespace {

using geometry::kPi;
using testing::make_box;

NormalizationManifest unit_manifest() {
  NormalizationManifest m;
  m.sizes[ObjectClass::kVehicle] = {{4.5, 2.0, 1.6}, {0.5, 0.2, 0.1}};
  m.sizes[ObjectClass::kPedestrian] = {{0.8, 0.8, 1.8}, {0.1, 0.1, 0.1}};
  m.sizes[ObjectClass::kCyclist] = {{1.8, 0.6, 1.7}, {0.2, 0.1, 0.1}};
  m.spread_mean = Vec2(0.5, 0.5);
  m.spread_std = Vec2(0.25, 0.25);
  return m;
}

forecast::Trajectory line_trajectory(double confidence = 1.0) {
  forecast::Trajectory t;
  t.confidence = confidence;
  for (int m = 1; m <= forecast::kHorizon; ++m) t.waypoints.push_back({m, 10.0 + m, 0.0, 0.0, 0.5, 0.5});
  return t;
}

/// `tracks` boxes moving +x at 5 m/s, 20 m apart, in every frame.
DetectionCache scripted_cache(int tracks, int frames) {
  DetectionCache cache;
  for (int f = 0; f < frames; ++f) {
    auto& boxes = cache.frames[f];
    for (int k = 0; k < tracks; ++k) boxes.push_back(make_box(0.5 * f, 20.0 * k, 4.5, 2.0, 0.0, ObjectClass::kVehicle, 0.9));
  }
  return cache;
}

TEST(BuildWindows, ForwardSpans) {
  const auto one = build_windows(100, ModarConfig{{1}, {}}, 200);
  ASSERT_EQ(one.size(), 1U);
  EXPECT_EQ(one[0].first_frame, 89);
  EXPECT_EQ(one[0].last_frame, 99);

  const auto far = build_windows(100, ModarConfig{{80}, {}}, 200);
  EXPECT_EQ(far[0].first_frame, 10);
  EXPECT_EQ(far[0].last_frame, 20);

  const auto clipped = build_windows(5, ModarConfig{{1}, {}}, 200);
  ASSERT_EQ(clipped.size(), 1U);
  EXPECT_EQ(clipped[0].first_frame, 0);
  EXPECT_EQ(clipped[0].last_frame, 4);
}

TEST(BuildWindows, ReverseSpansAndDrops) {
  const auto w = build_windows(100, ModarConfig{{}, {1, 95}}, 200);
  ASSERT_EQ(w.size(), 2U);
  EXPECT_EQ(w[0].direction, Direction::kReverse);
  EXPECT_EQ(w[0].first_frame, 101);
  EXPECT_EQ(w[0].last_frame, 111);
  // Anchor 195 is inside; the tail is clipped.
  EXPECT_EQ(w[1].last_frame, 199);
  EXPECT_TRUE(build_windows(150, ModarConfig{{}, {60}}, 200).empty());
  EXPECT_TRUE(build_windows(3, ModarConfig{{5}, {}}, 200).empty());
}

TEST(BuildWindows, OfflineCountAndBounds) {
  const auto config = ModarConfig::with_counts(80, 80);
  EXPECT_EQ(build_windows(100, config, 200).size(), 160U);
  for (int t0 : {0, 30, 199}) {
    for (const Window& w : build_windows(t0, config, 200)) {
      EXPECT_GE(w.first_frame, 0);
      EXPECT_LE(w.last_frame, 199);
      EXPECT_LE(w.length(), forecast::kMaxInputFrames);
      EXPECT_NE(w.first_frame <= t0 && t0 <= w.last_frame, true);
    }
  }
}

TEST(ModarConfigTest, ValidateOffsets) {
  EXPECT_NO_THROW(validate(ModarConfig::with_counts(80, 80)));
  EXPECT_THROW(validate(ModarConfig{{0}, {}}), ConfigError);
  EXPECT_THROW(validate(ModarConfig{{}, {81}}), ConfigError);
}

TEST(EncodeModar, MeanSizedVehicle) {
  const TrackMetadata track{4, make_box(0, 0), 0.9};
  const ModarPoint p = encode_modar(line_trajectory(), 10, track, unit_manifest(), Direction::kForward);
  EXPECT_DOUBLE_EQ(p.x, 20.0);
  EXPECT_DOUBLE_EQ(p.feature[channel::kSizeLength], 0.0);
  EXPECT_DOUBLE_EQ(p.feature[channel::kSizeWidth], 0.0);
  EXPECT_DOUBLE_EQ(p.feature[channel::kSizeHeight], 0.0);
  EXPECT_DOUBLE_EQ(p.feature[channel::kHeadingCos], 1.0);
  EXPECT_DOUBLE_EQ(p.feature[channel::kHeadingSin], 0.0);
  EXPECT_DOUBLE_EQ(p.feature[channel::kTimeClosest], -1.0);
  EXPECT_DOUBLE_EQ(p.feature[channel::kStdX], 0.0);
  EXPECT_EQ(p.provenance.track_id, 4);
  EXPECT_EQ(p.provenance.offset, 10);
  EXPECT_TRUE(is_valid(p));
}

TEST(EncodeModar, ReverseTimeIsPositive) {
  const TrackMetadata track{4, make_box(0, 0), 0.9};
  const ModarPoint p = encode_modar(line_trajectory(), 3, track, unit_manifest(), Direction::kReverse);
  EXPECT_NEAR(p.feature[channel::kTimeClosest], 0.3, 1e-12);
}

TEST(EncodeModar, PedestrianOneHot) {
  const TrackMetadata track{1, make_box(0, 0, 0.8, 0.8, 0.0, ObjectClass::kPedestrian), 0.5};
  const ModarPoint p = encode_modar(line_trajectory(), 1, track, unit_manifest(), Direction::kForward);
  EXPECT_EQ(p.feature[channel::kVehicle], 0.0);
  EXPECT_EQ(p.feature[channel::kPedestrian], 1.0);
  EXPECT_EQ(p.feature[channel::kCyclist], 0.0);
  EXPECT_EQ(p.object_class(), ObjectClass::kPedestrian);
}

TEST(EncodeModar, MissingWaypointThrows) {
  forecast::Trajectory shortened = line_trajectory();
  shortened.waypoints.resize(5);
  EXPECT_THROW(encode_modar(shortened, 6, TrackMetadata{1, make_box(0, 0), 1.0}, unit_manifest(),
                            Direction::kForward),
               MissingWaypoint);
}

TEST(DecodeBox, HeadingAndScore) {
  forecast::Trajectory t = line_trajectory(0.5);
  for (auto& w : t.waypoints) w.yaw = kPi / 2;
  const TrackMetadata track{1, make_box(0, 0, 5.0, 2.2, 0.0), 0.8};
  const ModarPoint p = encode_modar(t, 7, track, unit_manifest(), Direction::kForward);
  const Box3D b = decode_box(p, unit_manifest());
  EXPECT_NEAR(b.yaw, kPi / 2, 1e-12);
  EXPECT_NEAR(b.score, 0.4, 1e-12);
  EXPECT_NEAR(b.length, 5.0, 1e-12);
  EXPECT_NEAR(b.width, 2.2, 1e-12);
  EXPECT_DOUBLE_EQ(b.cx, 17.0);
}

TEST(PointJson, RoundTrip) {
  ModarPoint p = encode_modar(line_trajectory(0.3), 12, TrackMetadata{9, make_box(1, 2, 4.0, 1.9, 0.2), 0.7},
                              unit_manifest(), Direction::kReverse, 2);
  p.provenance.window = 14;
  const auto j = point_to_json(p, 42);
  EXPECT_EQ(j.at("frame_index").get<int>(), 42);
  EXPECT_EQ(point_from_json(j), p);
}

TEST(GenerateModar, EmptySceneGivesNothing) {
  DetectionCache cache;
  for (int f = 0; f < 40; ++f) cache.frames[f] = {};
  ForecastBank bank(cache, track::TrackerParams{}, forecast::PredictorKind::kConstantVelocity);
  EXPECT_TRUE(generate_modar(bank, 20, ModarConfig::with_counts(5, 5), 40, unit_manifest()).empty());
}

TEST(GenerateModar, TracksTimesHypotheses) {
  const DetectionCache cache = scripted_cache(3, 40);
  ForecastBank bank(cache, track::TrackerParams{}, forecast::PredictorKind::kMultiHypothesis);
  ModarConfig config{{5}, {}, forecast::PredictorKind::kMultiHypothesis, 6};
  const auto pts = generate_modar(bank, 30, config, 40, unit_manifest());
  EXPECT_EQ(pts.size(), 18U);
  std::set<std::pair<std::int64_t, int>> keys;
  for (const auto& p : pts) {
    EXPECT_TRUE(is_valid(p));
    keys.insert({p.provenance.track_id, p.provenance.hypothesis});
  }
  EXPECT_EQ(keys.size(), 18U);
}

TEST(GenerateModar, OnlineIsForwardOnlyAndNearTruth) {
  const DetectionCache cache = scripted_cache(1, 60);
  ForecastBank bank(cache, track::TrackerParams{}, forecast::PredictorKind::kConstantVelocity);
  const auto pts = generate_modar(bank, 40, ModarConfig::with_counts(20, 0), 60, unit_manifest());
  EXPECT_EQ(pts.size(), 20U);
  for (const auto& p : pts) {
    EXPECT_EQ(p.provenance.direction, Direction::kForward);
    EXPECT_NEAR(p.x, 0.5 * 40, 0.05);
    EXPECT_EQ(p.provenance.window, p.provenance.offset);
  }
}

TEST(GenerateModar, OfflineAtMostOnePerWindow) {
  const DetectionCache cache = scripted_cache(1, 200);
  ForecastBank bank(cache, track::TrackerParams{}, forecast::PredictorKind::kConstantVelocity);
  const auto pts = generate_modar(bank, 100, ModarConfig::with_counts(80, 80), 200, unit_manifest());
  EXPECT_LE(pts.size(), 160U);
  EXPECT_GE(pts.size(), 150U);
  int reverse = 0;
  for (const auto& p : pts) {
    reverse += p.provenance.direction == Direction::kReverse;
    EXPECT_NEAR(p.x, 50.0, 0.1);
  }
  EXPECT_GT(reverse, 0);
  // Overlapping targets reuse windows.
  const std::size_t memo = bank.size();
  generate_modar(bank, 101, ModarConfig::with_counts(80, 80), 200, unit_manifest());
  EXPECT_LT(bank.size(), memo + 10);
}

}  // namespace
}  // namespace modar::points
