#include "modar/fusion.hpp"

#include "modar/assignment.hpp"
#include "modar/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <numeric>
#include <tuple>

namespace modar::fusion {

using geometry::kPi;
using geometry::wrap_angle;

namespace {

struct Tagged {
  Box3D box;
  double weight = 0.0;
  std::size_t source = 0;
};

// Running weighted sums of one cluster.
struct Cluster {
  Box3D representative;
  double mass = 0.0;
  double cx = 0.0, cy = 0.0, cz = 0.0, l = 0.0, w = 0.0, h = 0.0;
  double heading_x = 0.0, heading_y = 0.0;
  std::vector<std::size_t> sources;
  std::vector<Tagged> members;
};

double aligned_yaw(double yaw, double reference) {
  return geometry::heading_delta(yaw, reference) > kPi / 2.0 ? wrap_angle(yaw + kPi) : yaw;
}

void join(Cluster& c, const Tagged& t) {
  const double yaw = c.members.empty() ? t.box.yaw : aligned_yaw(t.box.yaw, c.representative.yaw);
  const double m = t.weight * t.box.score;
  c.mass += m;
  c.cx += m * t.box.cx;
  c.cy += m * t.box.cy;
  c.cz += m * t.box.cz;
  c.l += m * t.box.length;
  c.w += m * t.box.width;
  c.h += m * t.box.height;
  c.heading_x += m * std::cos(yaw);
  c.heading_y += m * std::sin(yaw);
  if (std::find(c.sources.begin(), c.sources.end(), t.source) == c.sources.end()) {
    c.sources.push_back(t.source);
  }
  c.members.push_back(t);
  c.members.back().box.yaw = yaw;
}

Box3D fused_box(const Cluster& c, std::span<const double> source_weights) {
  Box3D b = c.members.front().box;
  if (c.mass > 0.0) {
    b.cx = c.cx / c.mass;
    b.cy = c.cy / c.mass;
    b.cz = c.cz / c.mass;
    b.length = c.l / c.mass;
    b.width = c.w / c.mass;
    b.height = c.h / c.mass;
    if (c.heading_x != 0.0 || c.heading_y != 0.0) b.yaw = std::atan2(c.heading_y, c.heading_x);
  } else {
    // Zero-mass cluster: plain mean of the members.
    const double n = static_cast<double>(c.members.size());
    double cx = 0.0, cy = 0.0, cz = 0.0, l = 0.0, w = 0.0, h = 0.0, hx = 0.0, hy = 0.0;
    for (const Tagged& t : c.members) {
      cx += t.box.cx;
      cy += t.box.cy;
      cz += t.box.cz;
      l += t.box.length;
      w += t.box.width;
      h += t.box.height;
      hx += std::cos(t.box.yaw);
      hy += std::sin(t.box.yaw);
    }
    b.cx = cx / n;
    b.cy = cy / n;
    b.cz = cz / n;
    b.length = l / n;
    b.width = w / n;
    b.height = h / n;
    if (hx != 0.0 || hy != 0.0) b.yaw = std::atan2(hy, hx);
  }
  double source_mass = 0.0;
  for (std::size_t s : c.sources) source_mass += source_weights[s];
  b.score = source_mass > 0.0 ? std::min(1.0, c.mass / source_mass) : 0.0;
  return b;
}

// Bring a MoDAR fused point back into a decodable point.
points::ModarPoint as_modar(const FusedPoint& p) {
  points::ModarPoint m;
  m.x = p.x;
  m.y = p.y;
  m.z = p.z;
  m.feature = p.feature;
  return m;
}

// Single-linkage components of same-class points within `radius` (BEV).
std::vector<std::vector<std::size_t>> link_groups(const std::vector<Vec2>& xy,
                                                  const std::vector<ObjectClass>& classes,
                                                  double radius) {
  const std::size_t n = xy.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };

  std::map<std::tuple<int, long, long>, std::vector<std::size_t>> grid;
  auto cell = [&](double v) { return static_cast<long>(std::floor(v / radius)); };
  for (std::size_t i = 0; i < n; ++i) {
    grid[{static_cast<int>(classes[i]), cell(xy[i].x()), cell(xy[i].y())}].push_back(i);
  }
  const double r2 = radius * radius;
  for (std::size_t i = 0; i < n; ++i) {
    const long gx = cell(xy[i].x());
    const long gy = cell(xy[i].y());
    for (long dx = -1; dx <= 1; ++dx) {
      for (long dy = -1; dy <= 1; ++dy) {
        auto it = grid.find({static_cast<int>(classes[i]), gx + dx, gy + dy});
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          if (j <= i || (xy[i] - xy[j]).squaredNorm() > r2) continue;
          const std::size_t a = find(i);
          const std::size_t b = find(j);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
      }
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> by_root;
  for (std::size_t i = 0; i < n; ++i) by_root[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [root, members] : by_root) out.push_back(std::move(members));
  return out;
}

}  // namespace

void validate(const FusionWeights& weights) {
  if (weights.lidar < 0.0 || weights.modar < 0.0) throw ConfigError("fusion weights must be >= 0");
  for (double d : weights.offset_decay) {
    if (d < 0.0) throw ConfigError("offset decay weights must be >= 0");
  }
  if (!(weights.wbf_iou > 0.0 && weights.wbf_iou < 1.0)) {
    throw ConfigError("wbf iou threshold must lie in (0, 1)");
  }
}

std::vector<FusedPoint> assemble_early(std::span<const LidarFrameInput> lidar,
                                       std::span<const points::ModarPoint> modar,
                                       const Pose& target_pose) {
  std::vector<std::size_t> order(lidar.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return lidar[a].time_offset_s < lidar[b].time_offset_s;
  });

  const Pose world_to_target = target_pose.inverse();
  std::vector<FusedPoint> out;
  for (std::size_t idx : order) {
    const LidarFrameInput& frame = lidar[idx];
    // Points of the target frame itself are copied untouched.
    const bool same = frame.pose == target_pose;
    const Pose to_target = world_to_target * frame.pose;
    for (const LidarPoint& p : frame.points) {
      const Vec3 raw(p.x, p.y, p.z);
      const Vec3 q = same ? raw : to_target.apply(raw);
      FusedPoint f;
      f.x = q.x();
      f.y = q.y();
      f.z = q.z();
      f.feature[0] = p.intensity;
      f.modality = kLidar;
      f.time_s = frame.time_offset_s;
      out.push_back(f);
    }
  }

  const double dyaw = -target_pose.yaw();
  const double c = std::cos(dyaw);
  const double s = std::sin(dyaw);
  for (const points::ModarPoint& m : modar) {
    const Vec3 q = world_to_target.apply(Vec3(m.x, m.y, m.z));
    FusedPoint f;
    f.x = q.x();
    f.y = q.y();
    f.z = q.z();
    f.feature = m.feature;
    const double hc = m.feature[points::channel::kHeadingCos];
    const double hs = m.feature[points::channel::kHeadingSin];
    f.feature[points::channel::kHeadingCos] = c * hc - s * hs;
    f.feature[points::channel::kHeadingSin] = s * hc + c * hs;
    f.modality = kModar;
    f.time_s = m.feature[points::channel::kTimeClosest];
    f.source = m.provenance.direction == points::Direction::kForward ? m.provenance.window
                                                                     : -m.provenance.window;
    out.push_back(f);
  }
  return out;
}

std::vector<Box3D> weighted_box_fusion(std::span<const WeightedGroup> groups, double iou_threshold) {
  std::vector<Box3D> out;
  for (const SupportedBox& b : weighted_box_fusion_support(groups, iou_threshold)) out.push_back(b.box);
  return out;
}

std::vector<SupportedBox> weighted_box_fusion_support(std::span<const WeightedGroup> groups,
                                                      double iou_threshold) {
  std::vector<Tagged> pool;
  std::vector<double> source_weights;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    source_weights.push_back(groups[g].weight);
    for (const Box3D& b : groups[g].boxes) pool.push_back({b, groups[g].weight, g});
  }
  std::stable_sort(pool.begin(), pool.end(), [](const Tagged& a, const Tagged& b) {
    return a.weight * a.box.score > b.weight * b.box.score;
  });

  std::vector<Cluster> clusters;
  for (const Tagged& t : pool) {
    Cluster* target = nullptr;
    for (Cluster& c : clusters) {
      if (c.representative.object_class == t.box.object_class &&
          geometry::iou_bev(c.representative, t.box) > iou_threshold) {
        target = &c;
        break;
      }
    }
    if (target == nullptr) {
      clusters.emplace_back();
      target = &clusters.back();
    }
    join(*target, t);
    target->representative = fused_box(*target, source_weights);
  }

  std::vector<SupportedBox> out;
  out.reserve(clusters.size());
  for (const Cluster& c : clusters) {
    double weight = 0.0;
    for (std::size_t s : c.sources) weight += source_weights[s];
    out.push_back({c.representative, static_cast<int>(c.sources.size()), weight});
  }
  return out;
}

std::vector<Box3D> modar_only_detect(std::span<const points::ModarPoint> modar,
                                     const FusionWeights& weights,
                                     const NormalizationManifest& manifest) {
  // One group per (direction, offset), forward sources first.
  std::map<std::pair<int, int>, WeightedGroup> groups;
  const int max_offset = static_cast<int>(weights.offset_decay.size());
  for (const points::ModarPoint& p : modar) {
    const int m = p.provenance.offset;
    if (m < 1 || m > max_offset) continue;
    const int dir = p.provenance.direction == points::Direction::kForward ? 0 : 1;
    WeightedGroup& g = groups[{dir, m}];
    g.weight = weights.offset_decay[static_cast<std::size_t>(m - 1)];
    g.boxes.push_back(points::decode_box(p, manifest));
  }
  std::vector<WeightedGroup> list;
  double total = 0.0;
  for (auto& [key, g] : groups) {
    total += g.weight;
    list.push_back(std::move(g));
  }
  std::vector<Box3D> out;
  for (const SupportedBox& b : weighted_box_fusion_support(list, weights.wbf_iou)) {
    out.push_back(b.box);
    out.back().score *= b.source_weight / total;
  }
  return top_by_score(std::move(out), weights.max_boxes);
}

std::vector<Box3D> consensus_proposals(std::span<const FusedPoint> fused, const FusionParams& params,
                                       const NormalizationManifest& manifest,
                                       const Pose& target_pose) {
  std::vector<points::ModarPoint> modar;
  std::vector<int> windows;
  for (const FusedPoint& p : fused) {
    if (p.modality != kModar) continue;
    modar.push_back(as_modar(p));
    windows.push_back(p.source);
  }
  // Windows that produced at least one point for this frame.
  const std::size_t total_windows = std::set<int>(windows.begin(), windows.end()).size();
  std::vector<Vec2> xy;
  std::vector<ObjectClass> classes;
  for (const auto& m : modar) {
    xy.emplace_back(m.x, m.y);
    classes.push_back(m.object_class());
  }

  std::vector<Box3D> proposals;
  for (const auto& members : link_groups(xy, classes, params.link_radius)) {
    std::map<int, WeightedGroup> sources;
    for (std::size_t i : members) {
      WeightedGroup& g = sources[windows[i]];
      g.weight = 1.0;
      g.boxes.push_back(geometry::transform_box(points::decode_box(modar[i], manifest), target_pose,
                                                Pose::identity()));
    }
    std::vector<WeightedGroup> list;
    for (auto& [key, g] : sources) list.push_back(std::move(g));
    for (const SupportedBox& b : weighted_box_fusion_support(list, params.consensus_iou)) {
      if (b.sources < params.min_support) continue;
      Box3D box = b.box;
      box.score *= static_cast<double>(b.sources) / static_cast<double>(total_windows);
      proposals.push_back(box);
    }
  }
  return proposals;
}

std::vector<Box3D> fusion_detector(std::span<const FusedPoint> fused,
                                   const detect::ClusterParams& cluster, const FusionParams& params,
                                   const NormalizationManifest& manifest, const Pose& target_pose) {
  std::vector<LidarPoint> lidar;
  for (const FusedPoint& p : fused) {
    if (p.modality != kLidar) continue;
    lidar.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                     static_cast<float>(p.feature[0])});
  }
  const auto boxes = detect::detect_cluster(lidar, cluster, target_pose);
  return fusion_detector_with_boxes(boxes, fused, params, manifest, target_pose);
}

std::vector<Box3D> fusion_detector_with_boxes(std::span<const Box3D> lidar_boxes,
                                              std::span<const FusedPoint> fused,
                                              const FusionParams& params,
                                              const NormalizationManifest& manifest,
                                              const Pose& target_pose) {
  const auto proposals = consensus_proposals(fused, params, manifest, target_pose);

  Eigen::MatrixXd benefit(static_cast<Eigen::Index>(proposals.size()),
                          static_cast<Eigen::Index>(lidar_boxes.size()));
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    for (std::size_t j = 0; j < lidar_boxes.size(); ++j) {
      benefit(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          proposals[i].object_class == lidar_boxes[j].object_class
              ? geometry::iou_bev(proposals[i], lidar_boxes[j])
              : 0.0;
    }
  }
  const auto match = max_weight_assignment(benefit, params.match_iou + 1e-12);

  std::vector<Box3D> out;
  std::vector<bool> lidar_matched(lidar_boxes.size(), false);
  std::vector<Box3D> refined(lidar_boxes.begin(), lidar_boxes.end());
  const Pose world_to_target = target_pose.inverse();
  std::vector<Box3D> recovered;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const Box3D& proposal = proposals[i];
    if (match[i]) {
      const auto j = static_cast<std::size_t>(*match[i]);
      lidar_matched[j] = true;
      Box3D lidar = lidar_boxes[j];
      // Box fitting leaves the heading sign open; the forecast motion settles it.
      lidar.yaw = aligned_yaw(lidar.yaw, proposal.yaw);
      Cluster c;
      const std::array<double, 2> w{params.refine_lidar_weight, params.refine_modar_weight};
      join(c, {lidar, w[0], 0});
      c.representative = lidar;
      join(c, {proposal, w[1], 1});
      Box3D fused = fused_box(c, w);
      fused.score = std::max(lidar.score, proposal.score);
      refined[j] = fused;
      continue;
    }
    const Box3D local = geometry::transform_box(proposal, Pose::identity(), world_to_target);
    int inside = 0;
    for (const FusedPoint& p : fused) {
      if (p.modality == kLidar && geometry::contains_bev(local, p.x, p.y)) ++inside;
    }
    if (inside < params.occlusion_point_gate) {
      Box3D b = proposal;
      b.score = proposal.score * params.unmatched_discount;
      recovered.push_back(b);
    }
  }
  out = std::move(refined);
  out.insert(out.end(), recovered.begin(), recovered.end());
  return detect::nms(out, params.nms_iou, true);
}

std::vector<Box3D> late_fuse(std::span<const Box3D> lidar, std::span<const Box3D> modar,
                             const FusionWeights& weights) {
  const std::array<WeightedGroup, 2> groups{
      WeightedGroup{std::vector<Box3D>(lidar.begin(), lidar.end()), weights.lidar},
      WeightedGroup{std::vector<Box3D>(modar.begin(), modar.end()), weights.modar}};
  return top_by_score(weighted_box_fusion(groups, weights.wbf_iou), weights.max_boxes);
}

std::vector<Box3D> early_plus_late(std::span<const Box3D> early, std::span<const points::ModarPoint> modar,
                                   const FusionWeights& weights,
                                   const NormalizationManifest& manifest) {
  const auto modar_boxes = modar_only_detect(modar, weights, manifest);
  return late_fuse(early, modar_boxes, weights);
}

std::vector<Box3D> top_by_score(std::vector<Box3D> boxes, std::size_t limit) {
  std::stable_sort(boxes.begin(), boxes.end(),
                   [](const Box3D& a, const Box3D& b) { return a.score > b.score; });
  if (boxes.size() > limit) boxes.resize(limit);
  return boxes;
}

}  // namespace modar::fusion
