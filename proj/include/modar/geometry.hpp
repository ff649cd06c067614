#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace modar {

enum class ObjectClass { kVehicle = 0, kPedestrian = 1, kCyclist = 2 };

inline constexpr std::array<ObjectClass, 3> kAllClasses = {
    ObjectClass::kVehicle, ObjectClass::kPedestrian, ObjectClass::kCyclist};

std::string_view to_string(ObjectClass c);
std::optional<ObjectClass> class_from_string(std::string_view name);

/// Oriented box resting in a planar scene. Heading is a yaw about +z.
struct Box3D {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;
  ObjectClass object_class = ObjectClass::kVehicle;
  double score = 1.0;

  bool operator==(const Box3D&) const = default;
};

/// True when sizes are positive, yaw is wrapped and score lies in [0, 1].
bool is_valid(const Box3D& box);

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

namespace geometry {

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

/// Smallest absolute angle between two headings, in [0, pi].
double heading_delta(double yaw_a, double yaw_b);

/// Counter-clockwise footprint corners.
std::array<Vec2, 4> footprint(const Box3D& box);

/// Shoelace area of a simple polygon (signed, positive for CCW).
double polygon_area(std::span<const Vec2> polygon);

/// Clips `subject` against the convex CCW polygon `clip`.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

double intersection_area_bev(const Box3D& a, const Box3D& b);
double iou_bev(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

/// Point-in-footprint test, with an optional margin added to each half extent.
bool contains_bev(const Box3D& box, double x, double y, double margin = 0.0);
bool contains(const Box3D& box, const Vec3& p, double margin = 0.0);

}  // namespace geometry

/// Rigid world-from-ego transform.
class Pose {
 public:
  Pose() : matrix_(Eigen::Matrix4d::Identity()) {}
  explicit Pose(const Eigen::Matrix4d& matrix) : matrix_(matrix) {}

  static Pose identity() { return Pose(); }
  static Pose from_xyz_yaw(double x, double y, double z, double yaw);
  /// Builds from 16 row-major values.
  static Pose from_row_major(std::span<const double> values);

  const Eigen::Matrix4d& matrix() const { return matrix_; }
  Eigen::Matrix3d rotation() const { return matrix_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return matrix_.topRightCorner<3, 1>(); }
  std::array<double, 16> row_major() const;

  /// Rotation block orthonormal with det 1, both within 1e-9.
  bool is_valid() const;
  /// Heading of the x axis projected on the ground plane.
  double yaw() const;

  Pose inverse() const;
  Pose operator*(const Pose& rhs) const { return Pose(matrix_ * rhs.matrix_); }
  Vec3 apply(const Vec3& p) const;

  bool operator==(const Pose& other) const { return matrix_ == other.matrix_; }

 private:
  Eigen::Matrix4d matrix_;
};

namespace geometry {

/// Maps points expressed in `src_pose`'s frame into `dst_pose`'s frame.
std::vector<Vec3> transform_points(std::span<const Vec3> points, const Pose& src_pose,
                                   const Pose& dst_pose);

/// Maps a box between frames. Throws NonPlanarRotation if the relative rotation tilts z.
Box3D transform_box(const Box3D& box, const Pose& src_pose, const Pose& dst_pose);

}  // namespace geometry
}  // namespace modar
