#pragma once

#include "modar/dataio.hpp"
#include "modar/geometry.hpp"

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace modar::eval {

enum class Difficulty { kL1, kL2 };

std::string_view to_string(Difficulty d);

struct EvalConfig {
  std::map<ObjectClass, double> iou_threshold{
      {ObjectClass::kVehicle, 0.7}, {ObjectClass::kPedestrian, 0.5}, {ObjectClass::kCyclist, 0.5}};
  /// L1 keeps gts with more than this many points; L2 with at least l2_min_points.
  int l1_more_than_points = 5;
  int l2_min_points = 1;
  std::vector<double> range_edges{0.0, 30.0, 50.0};
  std::vector<double> speed_edges{0.0, 0.2, 3.0, 6.0, 10.0};
  std::vector<std::string> speed_names{"STN", "SLOW", "MED", "FST", "VFST"};

  double threshold(ObjectClass c) const;
};

/// Throws ConfigError on thresholds outside (0, 1) or unsorted buckets.
void validate(const EvalConfig& config);

struct Match {
  int det = 0;
  int gt = 0;
  double iou = 0.0;
};

struct FrameMatch {
  std::vector<Match> matches;
  std::vector<int> unmatched_dets;
  std::vector<int> unmatched_gts;
};

/// Optimal one-to-one matching on 3D IoU among pairs at or above the threshold.
FrameMatch match_frame(std::span<const Box3D> dets, std::span<const Box3D> gts,
                       double iou_threshold);

struct ScoredDetection {
  double score = 0.0;
  bool true_positive = false;
  /// 1 - heading error / pi for true positives.
  double heading_weight = 0.0;
};

struct PrPoint {
  double score = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct ApResult {
  double ap = 0.0;
  double aph = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<PrPoint> pr;
};

/// Exact area under the precision envelope. Throws NoGroundTruth when
/// `num_gt` is zero.
ApResult compute_ap(std::span<const ScoredDetection> dets, int num_gt);

struct CellKey {
  ObjectClass object_class = ObjectClass::kVehicle;
  Difficulty difficulty = Difficulty::kL2;
  std::string breakdown = "ALL";

  auto operator<=>(const CellKey&) const = default;
};

struct Cell {
  int num_gt = 0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  /// Absent when the cell has no ground truth.
  std::optional<double> ap;
  std::optional<double> aph;
  std::vector<PrPoint> pr;

  bool present() const { return ap.has_value(); }
};

struct EvalResult {
  std::map<CellKey, Cell> cells;
  /// Mean of the per-class L2 APH over classes with ground truth.
  std::optional<double> mean_aph_l2;

  const Cell* find(ObjectClass c, Difficulty d, const std::string& breakdown = "ALL") const;
  std::optional<double> aph(ObjectClass c, Difficulty d, const std::string& breakdown = "ALL") const;
  std::optional<double> ap(ObjectClass c, Difficulty d, const std::string& breakdown = "ALL") const;
};

using DetectionsByFrame = std::map<int, std::vector<Box3D>>;

/// Evaluates `detections` against the gt of `frames` (all frames if empty).
EvalResult evaluate(const DetectionsByFrame& detections, const SequenceDataset& dataset,
                    const EvalConfig& config, const std::set<int>& frames = {});

/// Mean of the per-class values that are present.
std::optional<double> mean_present(std::span<const std::optional<double>> values);

std::vector<std::string> range_bucket_names(const EvalConfig& config);
std::vector<std::string> speed_bucket_names(const EvalConfig& config);

nlohmann::json result_to_json(const EvalResult& result);
EvalResult result_from_json(const nlohmann::json& j);

/// Rows of class,difficulty,breakdown,ap,aph,tp,fp,fn.
std::string result_to_csv(const EvalResult& result);

/// One point of an APH-vs-context sweep.
struct SweepPoint {
  int num_predictions = 0;
  std::string label;
  double aph = 0.0;
};

/// CSV tables and an SVG chart. Throws IoFailure.
void write_report(const EvalResult& result, std::span<const SweepPoint> sweep,
                  const std::filesystem::path& directory);

std::string sweep_svg(std::span<const SweepPoint> sweep);

}  // namespace modar::eval
