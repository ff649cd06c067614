#include "modar/geometry.hpp"

#include "modar/errors.hpp"

#include <algorithm>
#include <cmath>

namespace modar {

std::string_view to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::kVehicle:
      return "VEHICLE";
    case ObjectClass::kPedestrian:
      return "PEDESTRIAN";
    case ObjectClass::kCyclist:
      return "CYCLIST";
  }
  return "UNKNOWN";
}

std::optional<ObjectClass> class_from_string(std::string_view name) {
  for (ObjectClass c : kAllClasses) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

bool is_valid(const Box3D& box) {
  return box.length > 0.0 && box.width > 0.0 && box.height > 0.0 && box.yaw > -geometry::kPi &&
         box.yaw <= geometry::kPi && box.score >= 0.0 && box.score <= 1.0 &&
         std::isfinite(box.cx) && std::isfinite(box.cy) && std::isfinite(box.cz);
}

namespace geometry {

double wrap_angle(double angle) {
  double wrapped = std::remainder(angle, 2.0 * kPi);  // [-pi, pi]
  if (wrapped <= -kPi) wrapped += 2.0 * kPi;
  return wrapped;
}

double heading_delta(double yaw_a, double yaw_b) {
  const double d = std::abs(wrap_angle(yaw_a - yaw_b));
  return std::min(d, 2.0 * kPi - d);
}

std::array<Vec2, 4> footprint(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  const Vec2 center(box.cx, box.cy);
  const Vec2 ax(c * hl, s * hl);
  const Vec2 ay(-s * hw, c * hw);
  return {center + ax + ay, center - ax + ay, center - ax - ay, center + ax - ay};
}

double polygon_area(std::span<const Vec2> polygon) {
  if (polygon.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Vec2& p = polygon[i];
    const Vec2& q = polygon[(i + 1) % polygon.size()];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * twice;
}

namespace {

double cross(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

Vec2 segment_line_intersection(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
  const double dp = cross(a, b, p);
  const double dq = cross(a, b, q);
  const double t = dp / (dp - dq);
  return p + t * (q - p);
}

}  // namespace

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> output(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    std::vector<Vec2> input;
    input.swap(output);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Vec2& cur = input[i];
      const Vec2& prev = input[(i + input.size() - 1) % input.size()];
      const bool cur_in = cross(a, b, cur) >= 0.0;
      const bool prev_in = cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) output.push_back(segment_line_intersection(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(segment_line_intersection(prev, cur, a, b));
      }
    }
  }
  return output;
}

double intersection_area_bev(const Box3D& a, const Box3D& b) {
  const double reach_a = 0.5 * std::hypot(a.length, a.width);
  const double reach_b = 0.5 * std::hypot(b.length, b.width);
  if (std::hypot(a.cx - b.cx, a.cy - b.cy) >= reach_a + reach_b) return 0.0;
  const auto fa = footprint(a);
  const auto fb = footprint(b);
  const auto clipped = clip_convex(fa, fb);
  return std::max(0.0, polygon_area(clipped));
}

double iou_bev(const Box3D& a, const Box3D& b) {
  const double inter = intersection_area_bev(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.length * a.width + b.length * b.width - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double z_lo = std::max(a.cz - 0.5 * a.height, b.cz - 0.5 * b.height);
  const double z_hi = std::min(a.cz + 0.5 * a.height, b.cz + 0.5 * b.height);
  const double overlap_z = z_hi - z_lo;
  if (overlap_z <= 0.0) return 0.0;
  const double inter = intersection_area_bev(a, b) * overlap_z;
  if (inter <= 0.0) return 0.0;
  const double vol_a = a.length * a.width * a.height;
  const double vol_b = b.length * b.width * b.height;
  return std::clamp(inter / (vol_a + vol_b - inter), 0.0, 1.0);
}

bool contains_bev(const Box3D& box, double x, double y, double margin) {
  const double dx = x - box.cx;
  const double dy = y - box.cy;
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double local_x = c * dx + s * dy;
  const double local_y = -s * dx + c * dy;
  return std::abs(local_x) <= 0.5 * box.length + margin &&
         std::abs(local_y) <= 0.5 * box.width + margin;
}

bool contains(const Box3D& box, const Vec3& p, double margin) {
  return contains_bev(box, p.x(), p.y(), margin) &&
         std::abs(p.z() - box.cz) <= 0.5 * box.height + margin;
}

}  // namespace geometry

Pose Pose::from_xyz_yaw(double x, double y, double z, double yaw) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  m.topRightCorner<3, 1>() = Vec3(x, y, z);
  return Pose(m);
}

Pose Pose::from_row_major(std::span<const double> values) {
  if (values.size() != 16) throw InvariantViolation("pose needs 16 values");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = values[static_cast<std::size_t>(4 * r + c)];
  }
  return Pose(m);
}

std::array<double, 16> Pose::row_major() const {
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(4 * r + c)] = matrix_(r, c);
  }
  return out;
}

bool Pose::is_valid() const {
  const Eigen::Matrix3d r = rotation();
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  const bool bottom =
      (matrix_.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() <= 1e-12;
  return ortho <= 1e-9 && std::abs(r.determinant() - 1.0) <= 1e-9 && bottom;
}

double Pose::yaw() const { return geometry::wrap_angle(std::atan2(matrix_(1, 0), matrix_(0, 0))); }

Pose Pose::inverse() const {
  Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
  const Eigen::Matrix3d rt = rotation().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * translation();
  return Pose(inv);
}

Vec3 Pose::apply(const Vec3& p) const {
  return matrix_.topLeftCorner<3, 3>() * p + matrix_.topRightCorner<3, 1>();
}

namespace geometry {

std::vector<Vec3> transform_points(std::span<const Vec3> points, const Pose& src_pose,
                                   const Pose& dst_pose) {
  const Pose relative = dst_pose.inverse() * src_pose;
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(relative.apply(p));
  return out;
}

Box3D transform_box(const Box3D& box, const Pose& src_pose, const Pose& dst_pose) {
  const Pose relative = dst_pose.inverse() * src_pose;
  const Vec3 z_axis = relative.rotation().col(2);
  const double tilt = std::atan2(z_axis.head<2>().norm(), z_axis.z());
  if (tilt > 1e-6) throw NonPlanarRotation("relative rotation tilts the z axis");
  Box3D out = box;
  const Vec3 c = relative.apply(Vec3(box.cx, box.cy, box.cz));
  out.cx = c.x();
  out.cy = c.y();
  out.cz = c.z();
  out.yaw = wrap_angle(box.yaw + relative.yaw());
  return out;
}

}  // namespace geometry
}  // namespace modar
