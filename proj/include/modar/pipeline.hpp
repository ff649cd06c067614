#pragma once

#include "modar/dataio.hpp"
#include "modar/detector.hpp"
#include "modar/evalkit.hpp"
#include "modar/forecast.hpp"
#include "modar/fusion.hpp"
#include "modar/modar_points.hpp"
#include "modar/tracker.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace modar::pipeline {

enum class Mode { kOnline, kOffline };
enum class Strategy { kLidarOnly, kModarOnly, kEarly, kLate, kEarlyLate };
enum class DetectorKind { kCluster, kOracle };

std::string_view to_string(Mode m);
std::string_view to_string(Strategy s);
std::string_view to_string(DetectorKind k);

struct TargetFrames {
  /// Explicit list; when empty the range below is used.
  std::vector<int> frames;
  int first = 0;
  int last = -1;  // -1: last frame of the sequence
  int stride = 1;
};

struct PipelineConfig {
  std::string scenario;           // empty when `dataset` is set
  std::string dataset;            // path of a sequence directory
  std::uint64_t seed = 0;
  std::optional<int> frame_count;  // scenario length override

  DetectorKind detector = DetectorKind::kCluster;
  detect::ClusterParams cluster;
  detect::OracleNoise oracle;

  track::TrackerParams tracker;
  forecast::PredictorKind predictor = forecast::PredictorKind::kConstantVelocity;

  Mode mode = Mode::kOffline;
  int past_offsets = 80;
  int future_offsets = 80;
  int trajectories_used = 1;

  Strategy strategy = Strategy::kEarly;
  fusion::FusionWeights weights;
  fusion::FusionParams fusion;

  eval::EvalConfig eval;
  TargetFrames targets;
  int lidar_stack_frames = 1;
  std::string output_dir;
  /// Precomputed normalization manifest; built from the reference scene otherwise.
  std::string manifest;

  points::ModarConfig modar_config() const;
  bool uses_modar() const { return strategy != Strategy::kLidarOnly; }
};

/// Parses and validates a config. Errors carry the JSON pointer of the
/// offending field.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& file);

/// Artifact names inside an output directory.
namespace files {
inline constexpr const char* kSequence = "sequence";
inline constexpr const char* kDetections = "detections.json";
inline constexpr const char* kTracks = "tracks.jsonl";
inline constexpr const char* kForecasts = "forecasts.jsonl";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kModarPoints = "modar_points.jsonl";
inline constexpr const char* kBoxes = "boxes.jsonl";
inline constexpr const char* kEval = "eval.json";
inline constexpr const char* kReport = "report";
}  // namespace files

std::vector<int> resolve_targets(const TargetFrames& targets, int sequence_length);

// In-memory stages ----------------------------------------------------------

SequenceDataset make_sequence(const PipelineConfig& config);
DetectionCache detect_all(const SequenceDataset& sequence, const PipelineConfig& config);
std::string detection_fingerprint(const SequenceDataset& sequence, const PipelineConfig& config);

/// Manifest from the MIXED_CITY reference scene (seed 0).
NormalizationManifest reference_manifest(forecast::PredictorKind predictor);

/// Unique window spans needed by `targets`, tracked.
std::vector<points::WindowForecast> track_windows(const DetectionCache& cache,
                                                  const std::vector<int>& targets,
                                                  int sequence_length,
                                                  const PipelineConfig& config);

/// Forecasts every tracked window, keeping only the waypoints the targets use.
void forecast_windows(std::vector<points::WindowForecast>& windows, const std::vector<int>& targets,
                      int sequence_length, const PipelineConfig& config);

std::map<int, std::vector<points::ModarPoint>> modar_for_targets(
    const std::vector<points::WindowForecast>& windows, const std::vector<int>& targets,
    int sequence_length, const PipelineConfig& config, const NormalizationManifest& manifest);

eval::DetectionsByFrame fuse_targets(const SequenceDataset& sequence, const DetectionCache& cache,
                                     const std::map<int, std::vector<points::ModarPoint>>& modar,
                                     const std::vector<int>& targets, const PipelineConfig& config,
                                     const NormalizationManifest& manifest);

// Serialization ---------------------------------------------------------------

std::string windows_to_jsonl(const std::vector<points::WindowForecast>& windows, bool with_forecasts);
std::vector<points::WindowForecast> windows_from_jsonl(const std::string& text);
std::string modar_to_jsonl(const std::map<int, std::vector<points::ModarPoint>>& modar);
std::map<int, std::vector<points::ModarPoint>> modar_from_jsonl(const std::string& text);
std::string boxes_to_jsonl(const eval::DetectionsByFrame& boxes);
eval::DetectionsByFrame boxes_from_jsonl(const std::string& text);

// File stages (each reads and writes artifacts under `dir`) ------------------

void stage_simulate(const PipelineConfig& config, const std::filesystem::path& dir);
void stage_detect(const PipelineConfig& config, const std::filesystem::path& dir);
void stage_track(const PipelineConfig& config, const std::filesystem::path& dir);
void stage_forecast(const PipelineConfig& config, const std::filesystem::path& dir);
void stage_modar(const PipelineConfig& config, const std::filesystem::path& dir);
void stage_fuse(const PipelineConfig& config, const std::filesystem::path& dir);
eval::EvalResult stage_eval(const PipelineConfig& config, const std::filesystem::path& dir);
void stage_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out);

/// All stages in order. Stage failures are rethrown as StageError.
eval::EvalResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& dir);

/// In-memory run without artifacts, for experiments.
struct RunOutput {
  eval::EvalResult result;
  eval::DetectionsByFrame boxes;
  std::map<int, std::vector<points::ModarPoint>> modar;
};
RunOutput run_in_memory(const PipelineConfig& config, const SequenceDataset& sequence,
                        const DetectionCache& cache, const NormalizationManifest& manifest);

}  // namespace modar::pipeline
