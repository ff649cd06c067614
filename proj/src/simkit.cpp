#include "modar/simkit.hpp"

#include "modar/errors.hpp"
#include "modar/rng.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace modar::sim {

using geometry::kPi;
using geometry::wrap_angle;

Motion Motion::constant_velocity(double speed) {
  Motion m;
  m.kind = MotionKind::kConstantVelocity;
  m.speed_mps = speed;
  return m;
}

Motion Motion::constant_turn(double speed, double yaw_rate) {
  Motion m;
  m.kind = MotionKind::kConstantTurn;
  m.speed_mps = speed;
  m.yaw_rate_rps = yaw_rate;
  return m;
}

Motion Motion::stop_and_go(std::vector<SpeedSegment> segments) {
  Motion m;
  m.kind = MotionKind::kStopAndGo;
  m.segments = std::move(segments);
  return m;
}

Motion Motion::waypoint_path(std::vector<TimedPose> waypoints) {
  Motion m;
  m.kind = MotionKind::kWaypoints;
  m.waypoints = std::move(waypoints);
  return m;
}

KinematicState motion_state(const Motion& motion, double x0, double y0, double yaw0, double t) {
  KinematicState s{x0, y0, wrap_angle(yaw0), 0.0};
  switch (motion.kind) {
    case MotionKind::kStationary:
      return s;
    case MotionKind::kConstantVelocity:
      s.x += motion.speed_mps * t * std::cos(yaw0);
      s.y += motion.speed_mps * t * std::sin(yaw0);
      s.speed = std::abs(motion.speed_mps);
      return s;
    case MotionKind::kConstantTurn: {
      const double w = motion.yaw_rate_rps;
      const double v = motion.speed_mps;
      if (std::abs(w) < 1e-12) {
        s.x += v * t * std::cos(yaw0);
        s.y += v * t * std::sin(yaw0);
      } else {
        s.x += v / w * (std::sin(yaw0 + w * t) - std::sin(yaw0));
        s.y -= v / w * (std::cos(yaw0 + w * t) - std::cos(yaw0));
      }
      s.yaw = wrap_angle(yaw0 + w * t);
      s.speed = std::abs(v);
      return s;
    }
    case MotionKind::kStopAndGo: {
      double cycle = 0.0;
      double cycle_distance = 0.0;
      for (const auto& seg : motion.segments) {
        cycle += seg.duration_s;
        cycle_distance += seg.duration_s * seg.speed_mps;
      }
      if (cycle <= 0.0) return s;
      const double n_cycles = std::floor(t / cycle);
      double remaining = t - n_cycles * cycle;
      double distance = n_cycles * cycle_distance;
      for (const auto& seg : motion.segments) {
        if (remaining < seg.duration_s) {
          distance += remaining * seg.speed_mps;
          s.speed = std::abs(seg.speed_mps);
          break;
        }
        distance += seg.duration_s * seg.speed_mps;
        remaining -= seg.duration_s;
      }
      s.x += distance * std::cos(yaw0);
      s.y += distance * std::sin(yaw0);
      return s;
    }
    case MotionKind::kWaypoints: {
      const auto& wps = motion.waypoints;
      if (wps.empty()) return s;
      if (t <= wps.front().t) return {wps.front().x, wps.front().y, wrap_angle(wps.front().yaw), 0.0};
      if (t >= wps.back().t) return {wps.back().x, wps.back().y, wrap_angle(wps.back().yaw), 0.0};
      for (std::size_t i = 1; i < wps.size(); ++i) {
        if (t <= wps[i].t) {
          const auto& a = wps[i - 1];
          const auto& b = wps[i];
          const double dt = b.t - a.t;
          const double u = (t - a.t) / dt;
          s.x = a.x + u * (b.x - a.x);
          s.y = a.y + u * (b.y - a.y);
          s.yaw = wrap_angle(a.yaw + u * wrap_angle(b.yaw - a.yaw));
          s.speed = std::hypot(b.x - a.x, b.y - a.y) / dt;
          return s;
        }
      }
      return s;
    }
  }
  return s;
}

SizeTriple default_size(ObjectClass c) {
  switch (c) {
    case ObjectClass::kVehicle:
      return {4.5, 2.0, 1.6};
    case ObjectClass::kPedestrian:
      return {0.9, 0.9, 1.7};
    case ObjectClass::kCyclist:
      return {1.8, 0.8, 1.7};
  }
  return {1.0, 1.0, 1.0};
}

int expected_point_count(const LidarModel& lidar, double range) {
  if (range > lidar.max_range) return 0;
  const double r = std::max(range, 1e-3);
  return static_cast<int>(std::lround(lidar.points_at_10m * std::pow(10.0 / r, lidar.falloff_exponent)));
}

namespace {

constexpr double kFramePeriod = 0.1;

void check_motion(const Motion& m, const std::string& who) {
  if (m.kind == MotionKind::kWaypoints) {
    for (std::size_t i = 1; i < m.waypoints.size(); ++i) {
      if (!(m.waypoints[i].t > m.waypoints[i - 1].t)) {
        throw ConfigError(who + ": waypoint times must increase strictly");
      }
    }
  }
  if (m.kind == MotionKind::kStopAndGo) {
    for (const auto& seg : m.segments) {
      if (seg.duration_s < 0.0) throw ConfigError(who + ": negative segment duration");
    }
  }
}

void check_config(const SceneConfig& c) {
  if (c.frame_count < 1) throw ConfigError("frame_count must be >= 1");
  if (c.lidar.points_at_10m < 0.0 || c.lidar.noise_sigma < 0.0 || !(c.lidar.max_range > 0.0)) {
    throw ConfigError("invalid lidar model");
  }
  check_motion(c.ego.motion, "ego");
  for (std::size_t i = 0; i < c.actors.size(); ++i) {
    const auto& a = c.actors[i];
    const std::string who = "actor " + std::to_string(i);
    if (!(a.size.length > 0.0 && a.size.width > 0.0 && a.size.height > 0.0)) {
      throw ConfigError(who + ": size must be positive");
    }
    if (a.despawn_frame <= a.spawn_frame) throw ConfigError(who + ": despawn must follow spawn");
    check_motion(a.motion, who);
  }
}

// Azimuth interval [lo, hi] of a footprint relative to `ref` azimuth.
struct AngularSpan {
  double center = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

AngularSpan angular_span(const Box3D& box, const Vec2& eye) {
  AngularSpan span;
  span.center = std::atan2(box.cy - eye.y(), box.cx - eye.x());
  span.lo = kPi;
  span.hi = -kPi;
  for (const Vec2& corner : geometry::footprint(box)) {
    const double a = wrap_angle(std::atan2(corner.y() - eye.y(), corner.x() - eye.x()) - span.center);
    span.lo = std::min(span.lo, a);
    span.hi = std::max(span.hi, a);
  }
  return span;
}

// Fraction of `target` covered by the union of `occluders` (all relative to target.center).
double covered_fraction(const AngularSpan& target, const std::vector<AngularSpan>& occluders) {
  const double width = target.hi - target.lo;
  if (width <= 0.0) return 0.0;
  std::vector<std::pair<double, double>> pieces;
  for (const auto& o : occluders) {
    const double shift = wrap_angle(o.center - target.center);
    const double lo = std::max(target.lo, shift + o.lo);
    const double hi = std::min(target.hi, shift + o.hi);
    if (hi > lo) pieces.emplace_back(lo, hi);
  }
  std::sort(pieces.begin(), pieces.end());
  double covered = 0.0;
  double cur_lo = 0.0;
  double cur_hi = -1e300;
  for (const auto& [lo, hi] : pieces) {
    if (lo > cur_hi) {
      if (cur_hi > cur_lo) covered += cur_hi - cur_lo;
      cur_lo = lo;
      cur_hi = hi;
    } else {
      cur_hi = std::max(cur_hi, hi);
    }
  }
  if (cur_hi > cur_lo) covered += cur_hi - cur_lo;
  return std::clamp(covered / width, 0.0, 1.0);
}

bool shadowed(double azimuth, const std::vector<AngularSpan>& occluders) {
  for (const auto& o : occluders) {
    const double rel = wrap_angle(azimuth - o.center);
    if (rel >= o.lo && rel <= o.hi) return true;
  }
  return false;
}

struct Face {
  Vec3 origin;
  Vec3 u;  // spans the face together with v
  Vec3 v;
  double area;
};

// Side faces whose outward normal faces the sensor, plus the top face.
std::vector<Face> visible_faces(const Box3D& box, const Vec2& eye) {
  const auto fp = geometry::footprint(box);  // CCW
  const double bottom = box.cz - 0.5 * box.height;
  std::vector<Face> faces;
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec2& a = fp[i];
    const Vec2& b = fp[(i + 1) % 4];
    const Vec2 edge = b - a;
    const Vec2 normal(edge.y(), -edge.x());  // outward for CCW polygon
    const Vec2 mid = 0.5 * (a + b);
    if (normal.dot(eye - mid) > 0.0) {
      faces.push_back({Vec3(a.x(), a.y(), bottom), Vec3(edge.x(), edge.y(), 0.0),
                       Vec3(0.0, 0.0, box.height), edge.norm() * box.height});
    }
  }
  const Vec2 corner = fp[2];
  const Vec2 along_l = fp[3] - fp[2];
  const Vec2 along_w = fp[1] - fp[2];
  faces.push_back({Vec3(corner.x(), corner.y(), bottom + box.height), Vec3(along_l.x(), along_l.y(), 0.0),
                   Vec3(along_w.x(), along_w.y(), 0.0), box.length * box.width});
  return faces;
}

}  // namespace

SequenceDataset simulate(const SceneConfig& config) {
  check_config(config);
  SequenceDataset ds;
  ds.meta.sequence_id = config.name + "-" + std::to_string(config.seed);
  ds.meta.frame_period_s = kFramePeriod;
  for (ObjectClass c : kAllClasses) ds.meta.default_sizes[c] = default_size(c);

  const LidarModel& lidar = config.lidar;
  const std::int64_t period_us = ds.period_us();

  for (int f = 0; f < config.frame_count; ++f) {
    Rng rng(substream_seed(config.seed, "simulate", static_cast<std::uint64_t>(f)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const double t = f * kFramePeriod;
    const KinematicState ego =
        motion_state(config.ego.motion, config.ego.x, config.ego.y, config.ego.yaw, t);
    Frame frame;
    frame.frame_index = f;
    frame.timestamp_us = static_cast<std::int64_t>(f) * period_us;
    frame.ego_pose = Pose::from_xyz_yaw(ego.x, ego.y, 0.0, ego.yaw);
    const Pose ego_from_world = frame.ego_pose.inverse();
    const Vec2 eye(ego.x, ego.y);

    struct Live {
      std::size_t actor;
      Box3D box;
      double speed;
      double range;
      AngularSpan span;
    };
    std::vector<Live> live;
    for (std::size_t i = 0; i < config.actors.size(); ++i) {
      const ActorScript& a = config.actors[i];
      if (f < a.spawn_frame || f >= a.despawn_frame) continue;
      const KinematicState st =
          motion_state(a.motion, a.x, a.y, a.yaw, (f - a.spawn_frame) * kFramePeriod);
      Box3D box;
      box.cx = st.x;
      box.cy = st.y;
      box.cz = 0.5 * a.size.height;
      box.length = a.size.length;
      box.width = a.size.width;
      box.height = a.size.height;
      box.yaw = st.yaw;
      box.object_class = a.object_class;
      box.score = 1.0;
      const double range = std::hypot(st.x - ego.x, st.y - ego.y);
      live.push_back({i, box, st.speed, range, angular_span(box, eye)});
    }

    for (const Live& self : live) {
      std::vector<AngularSpan> occluders;
      if (lidar.occlusion) {
        for (const Live& other : live) {
          if (other.actor != self.actor && other.range < self.range) occluders.push_back(other.span);
        }
      }
      const double occluded = covered_fraction(self.span, occluders);

      const int n = expected_point_count(lidar, self.range);
      const auto faces = visible_faces(self.box, eye);
      double total_area = 0.0;
      for (const Face& face : faces) total_area += face.area;

      int kept = 0;
      for (int k = 0; k < n; ++k) {
        double pick = unit(rng) * total_area;
        const Face* face = &faces.back();
        for (const Face& candidate : faces) {
          if (pick < candidate.area) {
            face = &candidate;
            break;
          }
          pick -= candidate.area;
        }
        const double a = unit(rng);
        const double b = unit(rng);
        Vec3 p = face->origin + a * face->u + b * face->v;
        Vec3 noise(gauss(rng), gauss(rng), gauss(rng));
        if (!occluders.empty() && shadowed(std::atan2(p.y() - eye.y(), p.x() - eye.x()), occluders)) {
          continue;
        }
        if (lidar.noise_sigma > 0.0) {
          p += (lidar.noise_sigma * noise).cwiseMax(-3.0 * lidar.noise_sigma).cwiseMin(3.0 * lidar.noise_sigma);
        }
        const Vec3 local = ego_from_world.apply(p);
        frame.points.push_back({static_cast<float>(local.x()), static_cast<float>(local.y()),
                                static_cast<float>(local.z()), lidar.intensity});
        ++kept;
      }

      GtBox gt;
      gt.track_id = static_cast<std::int64_t>(self.actor);
      gt.box = self.box;
      gt.speed_mps = self.speed;
      gt.num_points_inside = kept;
      gt.occluded_fraction = occluded;
      frame.gt_boxes.push_back(gt);
    }
    ds.frames.push_back(std::move(frame));
  }
  return ds;
}

}  // namespace modar::sim
