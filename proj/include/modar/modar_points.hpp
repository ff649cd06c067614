#pragma once

#include "modar/dataio.hpp"
#include "modar/forecast.hpp"
#include "modar/tracker.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string_view>
#include <tuple>
#include <vector>

namespace modar::points {

/// Feature layout of a MoDAR point. The order is part of the file format.
namespace channel {
inline constexpr int kSizeLength = 0;
inline constexpr int kSizeWidth = 1;
inline constexpr int kSizeHeight = 2;
inline constexpr int kHeadingCos = 3;
inline constexpr int kHeadingSin = 4;
inline constexpr int kVehicle = 5;
inline constexpr int kPedestrian = 6;
inline constexpr int kCyclist = 7;
inline constexpr int kTrackingScore = 8;
inline constexpr int kTrajectoryScore = 9;
inline constexpr int kStdX = 10;
inline constexpr int kStdY = 11;
inline constexpr int kTimeClosest = 12;
}  // namespace channel

inline constexpr int kFeatureDim = 13;
using Feature = std::array<double, kFeatureDim>;

enum class Direction { kForward, kReverse };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view name);

struct Provenance {
  std::int64_t track_id = 0;
  int offset = 0;
  Direction direction = Direction::kForward;
  int hypothesis = 0;
  /// Gap between the source window's edge and the target frame.
  int window = 0;

  bool operator==(const Provenance&) const = default;
};

struct ModarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  Feature feature{};
  Provenance provenance;

  ObjectClass object_class() const;
  bool operator==(const ModarPoint&) const = default;
};

/// Checks the unit heading, one-hot and score-range invariants.
bool is_valid(const ModarPoint& p);

struct ModarConfig {
  std::vector<int> past_offsets;    // forward forecasting windows
  std::vector<int> future_offsets;  // reverse forecasting windows (offline only)
  forecast::PredictorKind predictor = forecast::PredictorKind::kConstantVelocity;
  int trajectories_used = 1;  // J

  /// Offsets 1..past and 1..future.
  static ModarConfig with_counts(int past, int future,
                                 forecast::PredictorKind predictor =
                                     forecast::PredictorKind::kConstantVelocity,
                                 int trajectories_used = 1);
};

/// Validates offsets against 1..80. Throws ConfigError.
void validate(const ModarConfig& config);

struct Window {
  Direction direction = Direction::kForward;
  int offset = 0;
  int first_frame = 0;
  int last_frame = 0;

  int length() const { return last_frame - first_frame + 1; }
  bool operator==(const Window&) const = default;
};

/// Forward window m spans [t0-m-10, t0-m]; reverse spans [t0+m, t0+m+10].
/// Windows are clipped to the sequence and dropped only when their anchor
/// frame falls outside it.
std::vector<Window> build_windows(int t0, const ModarConfig& config, int sequence_length);

struct TrackMetadata {
  std::int64_t track_id = 0;
  Box3D anchor_box;
  double tracking_score = 0.0;
};

/// Virtual point at waypoint `offset` of `traj`. Throws MissingWaypoint.
ModarPoint encode_modar(const forecast::Trajectory& traj, int offset, const TrackMetadata& track,
                        const NormalizationManifest& manifest, Direction direction,
                        int hypothesis = 0);

/// Box implied by a virtual point; score = tracking score x trajectory score.
Box3D decode_box(const ModarPoint& p, const NormalizationManifest& manifest);

// ---------------------------------------------------------------------------
// Window-level tracking and forecasting

/// A confirmed track alive at the end of a window, in original time order.
struct WindowTrack {
  std::int64_t track_id = 0;
  ObjectClass object_class = ObjectClass::kVehicle;
  double tracking_score = 0.0;
  std::vector<forecast::TrackletEntry> entries;  // at most 11, ascending frames
  std::vector<forecast::Trajectory> trajectories;
};

struct WindowForecast {
  Direction direction = Direction::kForward;
  int first_frame = 0;
  int last_frame = 0;
  std::vector<WindowTrack> tracks;

  /// Frame the forecasts start from: last frame (forward) or first (reverse).
  int anchor_frame() const { return direction == Direction::kForward ? last_frame : first_frame; }
};

/// Tracks the cached detections of one window. Reverse windows are tracked
/// in virtual (negated) time.
WindowForecast track_window(const DetectionCache& cache, Direction direction, int first_frame,
                            int last_frame, const track::TrackerParams& params);

/// Fills the trajectories of every track of a tracked window.
void forecast_window(WindowForecast& window, forecast::PredictorKind predictor);

/// Encodes the top-J trajectories of every track in `window` at the waypoint
/// that lands on `t0`.
std::vector<ModarPoint> encode_window(const WindowForecast& window, int t0, int trajectories_used,
                                      const NormalizationManifest& manifest);

/// Memoizes tracked and forecast windows by span, so overlapping subsequences
/// of different target frames share work.
class ForecastBank {
 public:
  ForecastBank(const DetectionCache& cache, track::TrackerParams tracker,
               forecast::PredictorKind predictor);

  const WindowForecast& get(Direction direction, int first_frame, int last_frame);
  std::size_t size() const { return memo_.size(); }
  const std::map<std::tuple<int, int, int>, WindowForecast>& entries() const { return memo_; }

 private:
  const DetectionCache& cache_;
  track::TrackerParams tracker_;
  forecast::PredictorKind predictor_;
  std::map<std::tuple<int, int, int>, WindowForecast> memo_;
};

/// Union of MoDAR points at target frame `t0` over every window of `config`.
std::vector<ModarPoint> generate_modar(ForecastBank& bank, int t0, const ModarConfig& config,
                                       int sequence_length, const NormalizationManifest& manifest);

/// Convenience overload building a throwaway bank.
std::vector<ModarPoint> generate_modar(const SequenceDataset& sequence, const DetectionCache& cache,
                                       const track::TrackerParams& tracker, int t0,
                                       const ModarConfig& config,
                                       const NormalizationManifest& manifest);

// JSON-lines records
nlohmann::json point_to_json(const ModarPoint& p, int frame_index);
ModarPoint point_from_json(const nlohmann::json& j);

}  // namespace modar::points
