#pragma once

#include "modar/geometry.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace modar::testing {

inline Box3D make_box(double cx, double cy, double length = 4.5, double width = 2.0, double yaw = 0.0,
                      ObjectClass c = ObjectClass::kVehicle, double score = 1.0) {
  Box3D b;
  b.cx = cx;
  b.cy = cy;
  b.cz = 0.8;
  b.length = length;
  b.width = width;
  b.height = 1.6;
  b.yaw = yaw;
  b.object_class = c;
  b.score = score;
  return b;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("modar_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace modar::testing
