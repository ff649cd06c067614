#include "modar/detector.hpp"
#include "modar/simkit.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace modar::detect {
namespace {

using geometry::kPi;
using testing::make_box;

TEST(DetectCluster, SimulatedBoxIsRecovered) {
  sim::SceneConfig c;
  sim::ActorScript a;
  a.x = 10.0;
  a.y = 1.0;
  c.actors.push_back(a);
  c.lidar.points_at_10m = 200.0;
  c.lidar.noise_sigma = 0.0;
  const auto ds = sim::simulate(c);
  const auto boxes = detect_cluster(ds.frames[0].points, ClusterParams{});
  ASSERT_EQ(boxes.size(), 1U);
  const Box3D& gt = ds.frames[0].gt_boxes[0].box;
  EXPECT_EQ(boxes[0].object_class, ObjectClass::kVehicle);
  EXPECT_LT(std::hypot(boxes[0].cx - gt.cx, boxes[0].cy - gt.cy), 0.3);
  EXPECT_LT(std::min(geometry::heading_delta(boxes[0].yaw, gt.yaw),
                     geometry::heading_delta(boxes[0].yaw, gt.yaw + kPi)),
            0.1);
  EXPECT_DOUBLE_EQ(boxes[0].score, 1.0);
}

TEST(DetectCluster, EmptyAndTooFewPoints) {
  EXPECT_TRUE(detect_cluster({}, ClusterParams{}).empty());
  std::vector<LidarPoint> four;
  for (int k = 0; k < 4; ++k) four.push_back({10.0F + 0.1F * static_cast<float>(k), 0.0F, 1.0F, 0.5F});
  EXPECT_TRUE(detect_cluster(four, ClusterParams{}).empty());
}

TEST(DetectCluster, GroundIsIgnored) {
  std::vector<LidarPoint> ground;
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 20; ++j) ground.push_back({0.2F * static_cast<float>(i), 0.2F * static_cast<float>(j), 0.05F, 0.5F});
  }
  EXPECT_TRUE(detect_cluster(ground, ClusterParams{}).empty());
}

TEST(DetectCluster, BoxesAreInWorldFrame) {
  std::vector<LidarPoint> pts;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 4; ++j) pts.push_back({5.0F + 0.2F * static_cast<float>(i), 0.2F * static_cast<float>(j), 1.0F, 0.5F});
  }
  const auto local = detect_cluster(pts, ClusterParams{});
  const auto world = detect_cluster(pts, ClusterParams{}, Pose::from_xyz_yaw(100, 0, 0, 0));
  ASSERT_EQ(local.size(), 1U);
  ASSERT_EQ(world.size(), 1U);
  EXPECT_NEAR(world[0].cx - local[0].cx, 100.0, 1e-9);
}

TEST(FitClusterBox, RotatedRectangle) {
  const double yaw = 0.6;
  std::vector<Vec3> pts;
  for (int i = 0; i <= 20; ++i) {
    for (int j = 0; j <= 8; ++j) {
      const double u = -2.0 + 0.2 * i;
      const double v = -0.8 + 0.2 * j;
      pts.emplace_back(u * std::cos(yaw) - v * std::sin(yaw), u * std::sin(yaw) + v * std::cos(yaw), 0.3 + 0.1 * (i % 10));
    }
  }
  const Box3D b = fit_cluster_box(pts, ClusterParams{});
  EXPECT_NEAR(b.length, 4.0, 1e-6);
  EXPECT_NEAR(b.width, 1.6, 1e-6);
  EXPECT_LT(std::min(geometry::heading_delta(b.yaw, yaw), geometry::heading_delta(b.yaw, yaw + kPi)), 1e-6);
}

TEST(DetectOracle, ZeroNoiseReproducesGt) {
  std::vector<GtBox> gts(2);
  gts[0].box = make_box(5, 1);
  gts[0].num_points_inside = 30;
  gts[1].box = make_box(-8, 3, 0.8, 0.8, 0.4, ObjectClass::kPedestrian);
  gts[1].num_points_inside = 12;
  const auto out = detect_oracle(gts, OracleNoise{}, 1);
  ASSERT_EQ(out.size(), 2U);
  for (std::size_t i = 0; i < 2; ++i) {
    Box3D expected = gts[i].box;
    expected.score = 1.0;
    EXPECT_EQ(out[i], expected);
  }
}

TEST(DetectOracle, OccludedNeverEmitted) {
  std::vector<GtBox> gts(1);
  gts[0].box = make_box(5, 1);
  gts[0].num_points_inside = 0;
  OracleNoise noise;
  noise.midpoint = -5.0;
  noise.slope = 10.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) EXPECT_TRUE(detect_oracle(gts, noise, seed).empty());
}

TEST(DetectOracle, StepLimit) {
  OracleNoise noise;
  noise.midpoint = 5.0;
  noise.slope = std::numeric_limits<double>::infinity();
  EXPECT_DOUBLE_EQ(detection_probability(noise, 6), 1.0);
  EXPECT_DOUBLE_EQ(detection_probability(noise, 4), 0.0);
  std::vector<GtBox> gts(2);
  gts[0].box = make_box(5, 1);
  gts[0].num_points_inside = 6;
  gts[1].box = make_box(-5, 1);
  gts[1].num_points_inside = 4;
  const auto out = detect_oracle(gts, noise, 3);
  ASSERT_EQ(out.size(), 1U);
  EXPECT_DOUBLE_EQ(out[0].cx, 5.0);
}

TEST(DetectOracle, DeterministicInSeed) {
  std::vector<GtBox> gts(5);
  for (int i = 0; i < 5; ++i) {
    gts[static_cast<std::size_t>(i)].box = make_box(4.0 * i, 0);
    gts[static_cast<std::size_t>(i)].num_points_inside = 3 * i;
  }
  OracleNoise noise;
  noise.midpoint = 5.0;
  noise.slope = 1.0;
  noise.center_sigma = 0.2;
  noise.false_positives_per_frame = 2.0;
  EXPECT_EQ(detect_oracle(gts, noise, 11), detect_oracle(gts, noise, 11));
}

TEST(Nms, Examples) {
  const Box3D a = make_box(0, 0, 4, 2, 0, ObjectClass::kVehicle, 0.9);
  Box3D b = a;
  b.score = 0.8;
  auto out = nms(std::vector<Box3D>{b, a}, 0.5, true);
  ASSERT_EQ(out.size(), 1U);
  EXPECT_DOUBLE_EQ(out[0].score, 0.9);

  out = nms(std::vector<Box3D>{a, make_box(20, 0, 4, 2, 0, ObjectClass::kVehicle, 0.1)}, 0.5, true);
  EXPECT_EQ(out.size(), 2U);
}

TEST(Nms, ChainKeepsEnds) {
  const Box3D a = make_box(0.0, 0, 4, 2, 0, ObjectClass::kVehicle, 0.9);
  const Box3D b = make_box(2.0, 0, 4, 2, 0, ObjectClass::kVehicle, 0.8);
  const Box3D c = make_box(4.0, 0, 4, 2, 0, ObjectClass::kVehicle, 0.7);
  ASSERT_GT(geometry::iou_bev(a, b), 0.3);
  ASSERT_GT(geometry::iou_bev(b, c), 0.3);
  ASSERT_EQ(geometry::iou_bev(a, c), 0.0);
  const auto out = nms(std::vector<Box3D>{c, b, a}, 0.3, true);
  ASSERT_EQ(out.size(), 2U);
  EXPECT_EQ(out[0], a);
  EXPECT_EQ(out[1], c);
}

TEST(Nms, ClassesDoNotSuppressEachOther) {
  const Box3D a = make_box(0, 0, 4, 2, 0, ObjectClass::kVehicle, 0.9);
  Box3D p = a;
  p.object_class = ObjectClass::kCyclist;
  EXPECT_EQ(nms(std::vector<Box3D>{a, p}, 0.5, true).size(), 2U);
}

}  // namespace
}  // namespace modar::detect
