#pragma once

#include "modar/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace modar {

/// Single LiDAR return in the ego frame of its sweep.
struct LidarPoint {
  float x = 0.0F;
  float y = 0.0F;
  float z = 0.0F;
  float intensity = 0.0F;

  bool operator==(const LidarPoint&) const = default;
};

struct GtBox {
  std::int64_t track_id = 0;
  Box3D box;
  double speed_mps = 0.0;
  int num_points_inside = 0;
  double occluded_fraction = 0.0;

  bool operator==(const GtBox&) const = default;
};

struct Frame {
  int frame_index = 0;
  std::int64_t timestamp_us = 0;
  Pose ego_pose;
  std::vector<GtBox> gt_boxes;
  std::vector<LidarPoint> points;

  bool operator==(const Frame&) const = default;
};

struct SizeTriple {
  double length = 0.0;
  double width = 0.0;
  double height = 0.0;

  bool operator==(const SizeTriple&) const = default;
};

struct SequenceMeta {
  std::string sequence_id;
  double frame_period_s = 0.1;
  std::vector<ObjectClass> classes{kAllClasses.begin(), kAllClasses.end()};
  /// Nominal actor sizes used by the generator.
  std::map<ObjectClass, SizeTriple> default_sizes;

  bool operator==(const SequenceMeta&) const = default;
};

struct SequenceDataset {
  SequenceMeta meta;
  std::vector<Frame> frames;

  std::int64_t period_us() const;
  bool operator==(const SequenceDataset&) const = default;
};

/// Throws InvariantViolation describing the first broken invariant.
void validate(const SequenceDataset& dataset);

void write_sequence(const SequenceDataset& dataset, const std::filesystem::path& directory);
SequenceDataset read_sequence(const std::filesystem::path& directory);

/// Raw little-endian float32 encoding, 16 bytes per point.
std::vector<std::uint8_t> encode_points(std::span<const LidarPoint> points);
std::vector<LidarPoint> decode_points(std::span<const std::uint8_t> bytes, const std::string& name);

// JSON helpers shared by every on-disk format.
/// Throws MalformedFile on an unknown name.
ObjectClass parse_class(const std::string& name);

nlohmann::json box_to_json(const Box3D& box);
Box3D box_from_json(const nlohmann::json& j);
nlohmann::json gt_to_json(const GtBox& gt);
GtBox gt_from_json(const nlohmann::json& j);

struct ClassSizeStats {
  SizeTriple mean;
  SizeTriple stddev;

  bool operator==(const ClassSizeStats&) const = default;
};

/// Mean/std used to normalize MoDAR feature channels.
struct NormalizationManifest {
  std::map<ObjectClass, ClassSizeStats> sizes;
  Vec2 spread_mean = Vec2::Zero();
  Vec2 spread_std = Vec2::Constant(1e-3);

  const ClassSizeStats& size_stats(ObjectClass c) const;
  bool operator==(const NormalizationManifest& other) const {
    return sizes == other.sizes && spread_mean == other.spread_mean &&
           spread_std == other.spread_std;
  }
};

inline constexpr double kMinStd = 1e-3;

/// Per-class population statistics of gt box sizes. `spread_samples` holds
/// (std_x, std_y) waypoint spreads from a forecaster dry run on gt tracks.
/// Throws EmptyClass when some class has no gt boxes.
NormalizationManifest build_normalization(std::span<const SequenceDataset> datasets,
                                          std::span<const Vec2> spread_samples);

nlohmann::json manifest_to_json(const NormalizationManifest& manifest);
NormalizationManifest manifest_from_json(const nlohmann::json& j);

/// Per-frame detector output keyed by the detector configuration fingerprint.
struct DetectionCache {
  std::string fingerprint;
  std::map<int, std::vector<Box3D>> frames;

  bool covers(int frame_index) const { return frames.count(frame_index) != 0; }
  bool operator==(const DetectionCache&) const = default;
};

void write_detection_cache(const DetectionCache& cache, const std::filesystem::path& file);
DetectionCache read_detection_cache(const std::filesystem::path& file);
/// Loads the cache only when its fingerprint matches.
std::optional<DetectionCache> load_detection_cache(const std::filesystem::path& file,
                                                   const std::string& fingerprint);

/// Stable 64-bit FNV-1a hash, hex encoded.
std::string fingerprint_of(const std::string& text);

/// Writes text, throwing IoFailure on error.
void write_text_file(const std::filesystem::path& file, const std::string& text);
std::string read_text_file(const std::filesystem::path& file);

}  // namespace modar
