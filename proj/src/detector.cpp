#include "modar/detector.hpp"

#include "modar/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <utility>

namespace modar::detect {

using geometry::kPi;
using geometry::wrap_angle;

namespace {

constexpr double kMinExtent = 0.1;

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Andrew's monotone chain; CCW without collinear points.
std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Vec2& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    const Vec2& p = pts[i - 1];
    while (k >= t && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k - 1);
  return hull;
}

struct Rect {
  double angle = 0.0;  // direction of the first axis
  double extent_a = 0.0;
  double extent_b = 0.0;
  Vec2 center = Vec2::Zero();
};

Rect rect_at_angle(std::span<const Vec2> pts, double angle) {
  const Vec2 ax(std::cos(angle), std::sin(angle));
  const Vec2 ay(-ax.y(), ax.x());
  double min_a = std::numeric_limits<double>::infinity();
  double max_a = -min_a;
  double min_b = min_a;
  double max_b = -min_a;
  for (const Vec2& p : pts) {
    const double a = p.dot(ax);
    const double b = p.dot(ay);
    min_a = std::min(min_a, a);
    max_a = std::max(max_a, a);
    min_b = std::min(min_b, b);
    max_b = std::max(max_b, b);
  }
  Rect r;
  r.angle = angle;
  r.extent_a = max_a - min_a;
  r.extent_b = max_b - min_b;
  r.center = 0.5 * (min_a + max_a) * ax + 0.5 * (min_b + max_b) * ay;
  return r;
}

// Minimum-area enclosing rectangle via hull edge directions.
Rect min_area_rect(const std::vector<Vec2>& pts) {
  const auto hull = convex_hull(pts);
  if (hull.size() < 3) {
    double angle = 0.0;
    if (hull.size() == 2) angle = std::atan2(hull[1].y() - hull[0].y(), hull[1].x() - hull[0].x());
    return rect_at_angle(pts, angle);
  }
  Rect best;
  double best_area = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2 e = hull[(i + 1) % hull.size()] - hull[i];
    const Rect r = rect_at_angle(hull, std::atan2(e.y(), e.x()));
    const double area = r.extent_a * r.extent_b;
    if (area < best_area - 1e-12) {
      best_area = area;
      best = r;
    }
  }
  return best;
}

// Maps an axis direction into (-pi/2, pi/2].
double wrap_half_turn(double angle) {
  double a = wrap_angle(angle);
  if (a > kPi / 2.0) a -= kPi;
  if (a <= -kPi / 2.0) a += kPi;
  return a;
}

ObjectClass classify(double length, double width, double height) {
  const double area = length * width;
  if (area > 3.0) return ObjectClass::kVehicle;
  if (height > 1.4 && area <= 1.0) return ObjectClass::kPedestrian;
  return ObjectClass::kCyclist;
}

}  // namespace

Box3D fit_cluster_box(std::span<const Vec3> points, const ClusterParams& params) {
  std::vector<Vec2> bev;
  bev.reserve(points.size());
  double max_z = -std::numeric_limits<double>::infinity();
  for (const Vec3& p : points) {
    bev.emplace_back(p.x(), p.y());
    max_z = std::max(max_z, p.z());
  }
  const Rect r = min_area_rect(bev);
  double length = r.extent_a;
  double width = r.extent_b;
  double yaw = r.angle;
  if (width > length) {
    std::swap(length, width);
    yaw += kPi / 2.0;
  }
  Box3D box;
  box.cx = r.center.x();
  box.cy = r.center.y();
  box.length = std::max(length, kMinExtent);
  box.width = std::max(width, kMinExtent);
  box.height = std::max(max_z - params.ground_z, kMinExtent);
  box.cz = params.ground_z + 0.5 * box.height;
  box.yaw = wrap_half_turn(yaw);
  box.object_class = classify(box.length, box.width, box.height);
  box.score = std::min(1.0, static_cast<double>(points.size()) / params.score_saturation);
  return box;
}

std::vector<Box3D> detect_cluster(std::span<const LidarPoint> points, const ClusterParams& params,
                                  const Pose& ego_pose) {
  using Cell = std::pair<long, long>;
  std::map<Cell, std::vector<std::size_t>> grid;
  const double z_min = params.ground_z + params.ground_clearance;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const LidarPoint& p = points[i];
    if (p.z <= z_min) continue;
    const Cell cell{static_cast<long>(std::floor(p.x / params.cell_size)),
                    static_cast<long>(std::floor(p.y / params.cell_size))};
    grid[cell].push_back(i);
  }

  std::vector<Box3D> boxes;
  std::map<Cell, bool> visited;
  for (const auto& [seed_cell, unused] : grid) {
    if (visited[seed_cell]) continue;
    std::vector<Cell> stack{seed_cell};
    visited[seed_cell] = true;
    std::vector<Vec3> cluster;
    while (!stack.empty()) {
      const Cell cell = stack.back();
      stack.pop_back();
      for (std::size_t idx : grid.at(cell)) {
        const LidarPoint& p = points[idx];
        cluster.emplace_back(p.x, p.y, p.z);
      }
      for (long dx = -1; dx <= 1; ++dx) {
        for (long dy = -1; dy <= 1; ++dy) {
          const Cell next{cell.first + dx, cell.second + dy};
          if (grid.count(next) && !visited[next]) {
            visited[next] = true;
            stack.push_back(next);
          }
        }
      }
    }
    if (static_cast<int>(cluster.size()) < params.min_points) continue;
    boxes.push_back(geometry::transform_box(fit_cluster_box(cluster, params), ego_pose, Pose::identity()));
  }
  return boxes;
}

double detection_probability(const OracleNoise& noise, int num_points_inside) {
  if (num_points_inside <= 0) return 0.0;
  const double z = noise.slope * (num_points_inside - noise.midpoint);
  if (std::isinf(noise.slope) || std::abs(z) > 700.0) {
    if (z > 0.0) return 1.0;
    if (z < 0.0) return 0.0;
    return 0.5;
  }
  return 1.0 / (1.0 + std::exp(-z));
}

std::vector<Box3D> detect_oracle(std::span<const GtBox> gt_boxes, const OracleNoise& noise,
                                 std::uint64_t seed, const Pose& ego_pose) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Box3D> out;
  for (const GtBox& gt : gt_boxes) {
    const double p = detection_probability(noise, gt.num_points_inside);
    // Draw every variate so that the stream does not depend on the outcome.
    const double u = unit(rng);
    const double n[7] = {gauss(rng), gauss(rng), gauss(rng), gauss(rng),
                         gauss(rng), gauss(rng), gauss(rng)};
    if (!(u < p)) continue;
    Box3D b = gt.box;
    b.cx += noise.center_sigma * n[0];
    b.cy += noise.center_sigma * n[1];
    b.length = std::max(kMinExtent, b.length + noise.size_sigma * n[2]);
    b.width = std::max(kMinExtent, b.width + noise.size_sigma * n[3]);
    b.height = std::max(kMinExtent, b.height + noise.size_sigma * n[4]);
    b.yaw = wrap_angle(b.yaw + noise.yaw_sigma * n[5]);
    b.score = std::clamp(p + noise.score_sigma * n[6], 0.0, 1.0);
    out.push_back(b);
  }
  const double rate = std::max(0.0, noise.false_positives_per_frame);
  int fp_count = static_cast<int>(std::floor(rate));
  if (unit(rng) < rate - std::floor(rate)) ++fp_count;
  const Vec3 ego = ego_pose.translation();
  for (int k = 0; k < fp_count; ++k) {
    const auto cls = kAllClasses[static_cast<std::size_t>(unit(rng) * 3.0) % 3];
    Box3D b;
    b.object_class = cls;
    switch (cls) {
      case ObjectClass::kVehicle:
        b.length = 4.5, b.width = 2.0, b.height = 1.6;
        break;
      case ObjectClass::kPedestrian:
        b.length = 0.9, b.width = 0.9, b.height = 1.7;
        break;
      case ObjectClass::kCyclist:
        b.length = 1.8, b.width = 0.8, b.height = 1.7;
        break;
    }
    b.cx = ego.x() + (2.0 * unit(rng) - 1.0) * noise.fp_half_extent;
    b.cy = ego.y() + (2.0 * unit(rng) - 1.0) * noise.fp_half_extent;
    b.cz = 0.5 * b.height;
    b.yaw = wrap_angle((2.0 * unit(rng) - 1.0) * kPi);
    b.score = 0.5 * unit(rng);
    out.push_back(b);
  }
  return out;
}

std::vector<Box3D> nms(std::span<const Box3D> boxes, double iou_threshold, bool bev) {
  std::vector<Box3D> sorted(boxes.begin(), boxes.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const Box3D& a, const Box3D& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cx != b.cx) return a.cx < b.cx;
    return a.cy < b.cy;
  });
  std::vector<Box3D> kept;
  for (const Box3D& candidate : sorted) {
    bool suppressed = false;
    for (const Box3D& k : kept) {
      if (k.object_class != candidate.object_class) continue;
      const double iou = bev ? geometry::iou_bev(k, candidate) : geometry::iou_3d(k, candidate);
      if (iou > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(candidate);
  }
  return kept;
}

}  // namespace modar::detect
