#pragma once

#include "modar/dataio.hpp"
#include "modar/geometry.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace modar::forecast {

/// Number of forecast waypoints (8 s at 10 Hz).
inline constexpr int kHorizon = 80;
/// Maximum tracklet length: 10 past frames plus the current one.
inline constexpr int kMaxInputFrames = 11;
/// Softmax temperature of the hypothesis bank, meters.
inline constexpr double kConfidenceTemperature = 0.5;
/// Speed below which the heading is taken from the box instead of the motion.
inline constexpr double kHeadingSpeedThreshold = 0.5;

struct TrackletEntry {
  int frame_index = 0;
  Box3D box;
  double score = 1.0;
};

struct TrackletInput {
  ObjectClass object_class = ObjectClass::kVehicle;
  std::vector<TrackletEntry> entries;  // frame indices strictly increasing
  double dt = 0.1;

  const TrackletEntry& anchor() const { return entries.back(); }
  int anchor_frame() const { return entries.back().frame_index; }
};

/// Throws InvariantViolation unless 1 <= length <= 11 with increasing frames.
void validate(const TrackletInput& input);

struct Waypoint {
  int offset = 0;
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
  double std_x = 0.0;
  double std_y = 0.0;
};

struct Trajectory {
  double confidence = 1.0;
  std::vector<Waypoint> waypoints;  // offsets 1..kHorizon
};

using Predictor = std::function<std::vector<Trajectory>(const TrackletInput&)>;

enum class PredictorKind { kStationary, kConstantVelocity, kMultiHypothesis };

std::string_view to_string(PredictorKind kind);
std::optional<PredictorKind> predictor_from_string(std::string_view name);

std::vector<Trajectory> forecast_stationary(const TrackletInput& input);
std::vector<Trajectory> forecast_cv(const TrackletInput& input);
std::vector<Trajectory> forecast_multihyp(const TrackletInput& input);

/// Runs `predictor` in virtual (negated) time. Waypoint m of the result lies
/// m frames before the earliest input frame.
std::vector<Trajectory> forecast_reverse(const TrackletInput& input, const Predictor& predictor);

Predictor make_predictor(PredictorKind kind);

/// Least-squares velocity of the box centers (zero for a single frame).
Vec2 fit_velocity(std::span<const TrackletEntry> entries, double dt);

struct ForecastMetrics {
  double ade = 0.0;
  double fde = 0.0;
  double min_ade = 0.0;
  double min_fde = 0.0;
};

/// `gt_future[m - 1]` holds the true center at offset m when known.
/// Throws EmptyGroundTruth when no offset is known.
ForecastMetrics forecast_metrics(std::span<const Trajectory> predicted,
                                 std::span<const std::optional<Vec2>> gt_future);

/// (std_x, std_y) spreads of `kind` forecasts over gt tracks, used to build
/// the normalization manifest.
std::vector<Vec2> collect_spread_samples(std::span<const SequenceDataset> datasets,
                                         PredictorKind kind, int stride = 10);

}  // namespace modar::forecast
