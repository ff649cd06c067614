#pragma once

#include "modar/dataio.hpp"
#include "modar/detector.hpp"
#include "modar/modar_points.hpp"

#include <array>
#include <span>
#include <vector>

namespace modar::fusion {

inline constexpr int kFeatureDim = points::kFeatureDim;

enum Modality : int { kLidar = 0, kModar = 1 };

struct FusedPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  points::Feature feature{};
  int modality = kLidar;
  double time_s = 0.0;
  /// MoDAR only: +gap for forward windows, -gap for reverse ones.
  int source = 0;

  bool operator==(const FusedPoint&) const = default;
};

struct LidarFrameInput {
  std::span<const LidarPoint> points;
  Pose pose;
  /// Seconds relative to the target frame (0, -0.1, ...).
  double time_offset_s = 0.0;
};

struct FusionWeights {
  double lidar = 0.9;
  double modar = 0.1;
  std::vector<double> offset_decay{1.0, 0.8, 0.6, 0.4, 0.2};
  double wbf_iou = 0.55;
  std::size_t max_boxes = 300;
};

/// Throws ConfigError on negative weights or a threshold outside (0, 1).
void validate(const FusionWeights& weights);

/// Knobs of the geometric early-fusion consumer.
struct FusionParams {
  double link_radius = 1.0;
  double consensus_iou = 0.1;
  /// Distinct windows a consensus proposal needs.
  int min_support = 5;
  double match_iou = 0.1;
  double refine_lidar_weight = 0.9;
  double refine_modar_weight = 0.1;
  double unmatched_discount = 0.5;
  int occlusion_point_gate = 5;
  double nms_iou = 0.5;
};

struct WeightedGroup {
  std::vector<Box3D> boxes;
  double weight = 1.0;
};

/// LiDAR points (ascending time offset) followed by MoDAR points, all in the
/// ego frame of `target_pose`. MoDAR heading channels are rotated with them.
std::vector<FusedPoint> assemble_early(std::span<const LidarFrameInput> lidar,
                                       std::span<const points::ModarPoint> modar,
                                       const Pose& target_pose);

/// Greedy weighted box fusion with a running representative per cluster.
std::vector<Box3D> weighted_box_fusion(std::span<const WeightedGroup> groups, double iou_threshold);

struct SupportedBox {
  Box3D box;
  int sources = 0;  // distinct groups in the cluster
  double source_weight = 0.0;  // summed weight of those groups
};

std::vector<SupportedBox> weighted_box_fusion_support(std::span<const WeightedGroup> groups,
                                                      double iou_threshold);

/// Decodes forward and reverse points of offsets 1..decay.size() and fuses
/// them, one source per (direction, offset). Scores are scaled by the share
/// of the total source weight that supports each box.
std::vector<Box3D> modar_only_detect(std::span<const points::ModarPoint> modar,
                                     const FusionWeights& weights,
                                     const NormalizationManifest& manifest);

/// Geometric early-fusion detector. Boxes come back in the world frame.
std::vector<Box3D> fusion_detector(std::span<const FusedPoint> fused,
                                   const detect::ClusterParams& cluster, const FusionParams& params,
                                   const NormalizationManifest& manifest, const Pose& target_pose);

/// Same as fusion_detector with the LiDAR-side boxes supplied by the caller
/// (world frame).
std::vector<Box3D> fusion_detector_with_boxes(std::span<const Box3D> lidar_boxes,
                                              std::span<const FusedPoint> fused,
                                              const FusionParams& params,
                                              const NormalizationManifest& manifest,
                                              const Pose& target_pose);

/// MoDAR consensus proposals (world frame) built from the flag-1 points.
std::vector<Box3D> consensus_proposals(std::span<const FusedPoint> fused, const FusionParams& params,
                                       const NormalizationManifest& manifest,
                                       const Pose& target_pose);

std::vector<Box3D> late_fuse(std::span<const Box3D> lidar, std::span<const Box3D> modar,
                             const FusionWeights& weights);

std::vector<Box3D> early_plus_late(std::span<const Box3D> early, std::span<const points::ModarPoint> modar,
                                   const FusionWeights& weights,
                                   const NormalizationManifest& manifest);

/// Descending by score, stable; keeps at most `limit`.
std::vector<Box3D> top_by_score(std::vector<Box3D> boxes, std::size_t limit);

}  // namespace modar::fusion
