#pragma once

#include "modar/dataio.hpp"
#include "modar/geometry.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace modar::detect {

struct ClusterParams {
  double cell_size = 0.3;
  int min_points = 5;
  double score_saturation = 50.0;
  /// Points at or below ground_z + ground_clearance are treated as ground.
  double ground_clearance = 0.2;
  /// Flat ground elevation in the ego frame; box bottoms are anchored to it.
  double ground_z = 0.0;
};

/// BEV-grid connected components with a minimum-area rectangle fit per
/// cluster. Points are in the ego frame of `ego_pose`; boxes come back in
/// the world frame.
std::vector<Box3D> detect_cluster(std::span<const LidarPoint> points, const ClusterParams& params,
                                  const Pose& ego_pose = Pose::identity());

/// Box fit for one cluster in its own frame (exposed for tests).
Box3D fit_cluster_box(std::span<const Vec3> points, const ClusterParams& params);

struct OracleNoise {
  /// Detection probability 1 / (1 + exp(-slope * (n - midpoint))) in the
  /// number of points inside the gt box. slope = +inf gives a hard step.
  double midpoint = 0.0;
  double slope = 1e9;
  double center_sigma = 0.0;
  double size_sigma = 0.0;
  double yaw_sigma = 0.0;
  /// Reported score = detection probability plus gaussian jitter, clamped.
  double score_sigma = 0.0;
  double false_positives_per_frame = 0.0;
  /// False positives are drawn uniformly in this square around the ego.
  double fp_half_extent = 50.0;
};

double detection_probability(const OracleNoise& noise, int num_points_inside);

/// Perturbed copy of the ground truth. Deterministic in `seed`.
std::vector<Box3D> detect_oracle(std::span<const GtBox> gt_boxes, const OracleNoise& noise,
                                 std::uint64_t seed, const Pose& ego_pose = Pose::identity());

/// Greedy class-wise non-maximum suppression.
std::vector<Box3D> nms(std::span<const Box3D> boxes, double iou_threshold, bool bev);

}  // namespace modar::detect
