#include "modar/modar_points.hpp"

#include "modar/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace modar::points {

namespace {

constexpr int kWindowSpan = forecast::kMaxInputFrames - 1;

int direction_key(Direction d) { return d == Direction::kForward ? 0 : 1; }

double normalize(double value, double mean, double stddev) { return (value - mean) / stddev; }

double unit_clamp(double v) { return std::clamp(v, 0.0, 1.0); }

std::vector<int> sorted_unique(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::kForward ? "FORWARD" : "REVERSE"; }

Direction direction_from_string(std::string_view name) {
  if (name == "FORWARD") return Direction::kForward;
  if (name == "REVERSE") return Direction::kReverse;
  throw MalformedFile("unknown direction '" + std::string(name) + "'");
}

ObjectClass ModarPoint::object_class() const {
  const auto begin = feature.begin() + channel::kVehicle;
  const auto best = std::max_element(begin, begin + 3);
  return kAllClasses[static_cast<std::size_t>(best - begin)];
}

bool is_valid(const ModarPoint& p) {
  const auto& f = p.feature;
  const double norm = f[channel::kHeadingCos] * f[channel::kHeadingCos] +
                      f[channel::kHeadingSin] * f[channel::kHeadingSin];
  if (std::abs(norm - 1.0) > 1e-9) return false;
  int ones = 0;
  for (int c = channel::kVehicle; c <= channel::kCyclist; ++c) {
    if (f[c] == 1.0) {
      ++ones;
    } else if (f[c] != 0.0) {
      return false;
    }
  }
  if (ones != 1) return false;
  for (int c : {channel::kTrackingScore, channel::kTrajectoryScore}) {
    if (!(f[c] >= 0.0 && f[c] <= 1.0)) return false;
  }
  return std::all_of(f.begin(), f.end(), [](double v) { return std::isfinite(v); }) &&
         std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

ModarConfig ModarConfig::with_counts(int past, int future, forecast::PredictorKind predictor,
                                     int trajectories_used) {
  ModarConfig c;
  c.past_offsets.resize(static_cast<std::size_t>(std::max(past, 0)));
  std::iota(c.past_offsets.begin(), c.past_offsets.end(), 1);
  c.future_offsets.resize(static_cast<std::size_t>(std::max(future, 0)));
  std::iota(c.future_offsets.begin(), c.future_offsets.end(), 1);
  c.predictor = predictor;
  c.trajectories_used = trajectories_used;
  return c;
}

void validate(const ModarConfig& config) {
  for (const auto* offsets : {&config.past_offsets, &config.future_offsets}) {
    for (int m : *offsets) {
      if (m < 1 || m > forecast::kHorizon) {
        throw ConfigError("offset " + std::to_string(m) + " outside 1.." +
                          std::to_string(forecast::kHorizon));
      }
    }
  }
  if (config.trajectories_used < 1) throw ConfigError("J must be at least 1");
}

std::vector<Window> build_windows(int t0, const ModarConfig& config, int sequence_length) {
  std::vector<Window> out;
  for (int m : sorted_unique(config.past_offsets)) {
    const int anchor = t0 - m;
    if (anchor < 0) continue;
    out.push_back({Direction::kForward, m, std::max(0, anchor - kWindowSpan), anchor});
  }
  for (int m : sorted_unique(config.future_offsets)) {
    const int anchor = t0 + m;
    if (anchor >= sequence_length) continue;
    out.push_back({Direction::kReverse, m, anchor, std::min(sequence_length - 1, anchor + kWindowSpan)});
  }
  return out;
}

ModarPoint encode_modar(const forecast::Trajectory& traj, int offset, const TrackMetadata& track,
                        const NormalizationManifest& manifest, Direction direction, int hypothesis) {
  const auto it = std::find_if(traj.waypoints.begin(), traj.waypoints.end(),
                               [offset](const forecast::Waypoint& w) { return w.offset == offset; });
  if (it == traj.waypoints.end()) {
    throw MissingWaypoint("trajectory has no waypoint at offset " + std::to_string(offset));
  }
  const forecast::Waypoint& w = *it;
  const Box3D& anchor = track.anchor_box;
  const ClassSizeStats& stats = manifest.size_stats(anchor.object_class);

  ModarPoint p;
  p.x = w.x;
  p.y = w.y;
  p.z = anchor.cz;
  auto& f = p.feature;
  f[channel::kSizeLength] = normalize(anchor.length, stats.mean.length, stats.stddev.length);
  f[channel::kSizeWidth] = normalize(anchor.width, stats.mean.width, stats.stddev.width);
  f[channel::kSizeHeight] = normalize(anchor.height, stats.mean.height, stats.stddev.height);
  f[channel::kHeadingCos] = std::cos(w.yaw);
  f[channel::kHeadingSin] = std::sin(w.yaw);
  f[channel::kVehicle + static_cast<int>(anchor.object_class)] = 1.0;
  f[channel::kTrackingScore] = unit_clamp(track.tracking_score);
  f[channel::kTrajectoryScore] = unit_clamp(traj.confidence);
  f[channel::kStdX] = normalize(w.std_x, manifest.spread_mean.x(), manifest.spread_std.x());
  f[channel::kStdY] = normalize(w.std_y, manifest.spread_mean.y(), manifest.spread_std.y());
  f[channel::kTimeClosest] = (direction == Direction::kForward ? -0.1 : 0.1) * offset;
  p.provenance = {track.track_id, offset, direction, hypothesis, 0};
  return p;
}

Box3D decode_box(const ModarPoint& p, const NormalizationManifest& manifest) {
  const auto& f = p.feature;
  Box3D b;
  b.object_class = p.object_class();
  const ClassSizeStats& stats = manifest.size_stats(b.object_class);
  b.cx = p.x;
  b.cy = p.y;
  b.cz = p.z;
  b.length = f[channel::kSizeLength] * stats.stddev.length + stats.mean.length;
  b.width = f[channel::kSizeWidth] * stats.stddev.width + stats.mean.width;
  b.height = f[channel::kSizeHeight] * stats.stddev.height + stats.mean.height;
  b.yaw = std::atan2(f[channel::kHeadingSin], f[channel::kHeadingCos]);
  b.score = f[channel::kTrackingScore] * f[channel::kTrajectoryScore];
  return b;
}

WindowForecast track_window(const DetectionCache& cache, Direction direction, int first_frame,
                            int last_frame, const track::TrackerParams& params) {
  const bool reverse = direction == Direction::kReverse;
  std::vector<track::FrameDetections> frames;
  for (int i = 0; i <= last_frame - first_frame; ++i) {
    const int f = reverse ? last_frame - i : first_frame + i;
    track::FrameDetections fd;
    fd.frame_index = reverse ? -f : f;
    if (auto it = cache.frames.find(f); it != cache.frames.end()) fd.boxes = it->second;
    frames.push_back(std::move(fd));
  }
  const auto tracks = track::track_sequence(frames, params);

  WindowForecast out;
  out.direction = direction;
  out.first_frame = first_frame;
  out.last_frame = last_frame;
  for (const track::KalmanTrack& t : tracks) {
    if (t.terminated || t.history.empty()) continue;
    WindowTrack wt;
    wt.track_id = t.track_id;
    wt.object_class = t.object_class;
    wt.tracking_score = track::tracking_score(t, t.last_frame());
    const std::size_t keep = std::min<std::size_t>(t.history.size(), forecast::kMaxInputFrames);
    for (auto it = t.history.end() - static_cast<std::ptrdiff_t>(keep); it != t.history.end(); ++it) {
      wt.entries.push_back({reverse ? -it->frame_index : it->frame_index, it->box, it->detection_score});
    }
    if (reverse) std::reverse(wt.entries.begin(), wt.entries.end());
    out.tracks.push_back(std::move(wt));
  }
  return out;
}

void forecast_window(WindowForecast& window, forecast::PredictorKind predictor) {
  const forecast::Predictor predict = forecast::make_predictor(predictor);
  for (WindowTrack& t : window.tracks) {
    forecast::TrackletInput input;
    input.object_class = t.object_class;
    input.entries = t.entries;
    t.trajectories = window.direction == Direction::kForward
                         ? predict(input)
                         : forecast::forecast_reverse(input, predict);
  }
}

std::vector<ModarPoint> encode_window(const WindowForecast& window, int t0, int trajectories_used,
                                      const NormalizationManifest& manifest) {
  std::vector<ModarPoint> out;
  const bool forward = window.direction == Direction::kForward;
  for (const WindowTrack& t : window.tracks) {
    if (t.entries.empty()) continue;
    // A track that missed the window edge forecasts from its last observation.
    const forecast::TrackletEntry& anchor = forward ? t.entries.back() : t.entries.front();
    const int offset = forward ? t0 - anchor.frame_index : anchor.frame_index - t0;
    if (offset < 1 || offset > forecast::kHorizon) continue;

    std::vector<std::size_t> order(t.trajectories.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return t.trajectories[a].confidence > t.trajectories[b].confidence;
    });
    const std::size_t used = std::min(order.size(), static_cast<std::size_t>(trajectories_used));
    const TrackMetadata meta{t.track_id, anchor.box, t.tracking_score};
    const int gap = forward ? t0 - window.last_frame : window.first_frame - t0;
    for (std::size_t k = 0; k < used; ++k) {
      out.push_back(encode_modar(t.trajectories[order[k]], offset, meta, manifest, window.direction,
                                 static_cast<int>(order[k])));
      out.back().provenance.window = gap;
    }
  }
  return out;
}

ForecastBank::ForecastBank(const DetectionCache& cache, track::TrackerParams tracker,
                           forecast::PredictorKind predictor)
    : cache_(cache), tracker_(std::move(tracker)), predictor_(predictor) {}

const WindowForecast& ForecastBank::get(Direction direction, int first_frame, int last_frame) {
  const auto key = std::make_tuple(direction_key(direction), first_frame, last_frame);
  auto it = memo_.find(key);
  if (it == memo_.end()) {
    WindowForecast w = track_window(cache_, direction, first_frame, last_frame, tracker_);
    forecast_window(w, predictor_);
    it = memo_.emplace(key, std::move(w)).first;
  }
  return it->second;
}

std::vector<ModarPoint> generate_modar(ForecastBank& bank, int t0, const ModarConfig& config,
                                       int sequence_length, const NormalizationManifest& manifest) {
  validate(config);
  std::vector<ModarPoint> out;
  for (const Window& w : build_windows(t0, config, sequence_length)) {
    const WindowForecast& wf = bank.get(w.direction, w.first_frame, w.last_frame);
    auto pts = encode_window(wf, t0, config.trajectories_used, manifest);
    out.insert(out.end(), std::make_move_iterator(pts.begin()), std::make_move_iterator(pts.end()));
  }
  return out;
}

std::vector<ModarPoint> generate_modar(const SequenceDataset& sequence, const DetectionCache& cache,
                                       const track::TrackerParams& tracker, int t0,
                                       const ModarConfig& config,
                                       const NormalizationManifest& manifest) {
  ForecastBank bank(cache, tracker, config.predictor);
  return generate_modar(bank, t0, config, static_cast<int>(sequence.frames.size()), manifest);
}

nlohmann::json point_to_json(const ModarPoint& p, int frame_index) {
  return {{"frame_index", frame_index},
          {"x", p.x},
          {"y", p.y},
          {"z", p.z},
          {"feature", p.feature},
          {"track_id", p.provenance.track_id},
          {"offset", p.provenance.offset},
          {"direction", to_string(p.provenance.direction)},
          {"hypothesis", p.provenance.hypothesis},
          {"window", p.provenance.window}};
}

ModarPoint point_from_json(const nlohmann::json& j) {
  try {
    ModarPoint p;
    p.x = j.at("x").get<double>();
    p.y = j.at("y").get<double>();
    p.z = j.at("z").get<double>();
    const auto& feature = j.at("feature");
    if (!feature.is_array() || feature.size() != kFeatureDim) {
      throw MalformedFile("MoDAR feature must have " + std::to_string(kFeatureDim) + " channels");
    }
    for (int i = 0; i < kFeatureDim; ++i) p.feature[i] = feature[static_cast<std::size_t>(i)].get<double>();
    p.provenance.track_id = j.at("track_id").get<std::int64_t>();
    p.provenance.offset = j.at("offset").get<int>();
    p.provenance.direction = direction_from_string(j.at("direction").get<std::string>());
    p.provenance.hypothesis = j.at("hypothesis").get<int>();
    p.provenance.window = j.at("window").get<int>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFile(std::string("bad MoDAR point: ") + e.what());
  }
}

}  // namespace modar::points
