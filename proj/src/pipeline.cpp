#include "modar/pipeline.hpp"

#include "modar/errors.hpp"
#include "modar/rng.hpp"
#include "modar/simkit.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <sstream>

namespace modar::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Logging (MODAR_LOG=info|debug); never affects results.

bool log_enabled() {
  static const bool enabled = [] {
    const char* v = std::getenv("MODAR_LOG");
    return v != nullptr && (std::string(v) == "info" || std::string(v) == "debug");
  }();
  return enabled;
}

class StageTimer {
 public:
  explicit StageTimer(std::string name) : name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    if (!log_enabled()) return;
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - start_)
                        .count();
    std::cerr << "[modar] " << name_ << " " << ms << " ms\n";
  }

 private:
  std::string name_;
  std::chrono::steady_clock::time_point start_;
};

template <typename F>
auto run_stage(const std::string& name, F&& f) {
  StageTimer timer(name);
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

// ---------------------------------------------------------------------------
// Config reading with JSON-pointer diagnostics.

class Node {
 public:
  Node(const json& j, std::string pointer) : j_(j), pointer_(std::move(pointer)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError((key.empty() ? (pointer_.empty() ? "/" : pointer_) : pointer_ + "/" + key) +
                      ": " + what);
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  Node child(const std::string& key) const {
    if (!has(key)) fail(key, "missing section");
    return Node(j_.at(key), pointer_ + "/" + key);
  }
  const json& raw(const std::string& key) const { return j_.at(key); }
  std::string path(const std::string& key) const { return pointer_ + "/" + key; }

  void allow_only(std::initializer_list<const char*> keys) const {
    for (const auto& [k, v] : j_.items()) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; })) {
        fail(k, "unknown field");
      }
    }
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_number()) fail(key, "expected a number");
    return j_.at(key).get<double>();
  }
  int integer(const std::string& key, int fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_number_integer()) fail(key, "expected an integer");
    return j_.at(key).get<int>();
  }
  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      fail(key, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_string()) fail(key, "expected a string");
    return j_.at(key).get<std::string>();
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback,
                              std::optional<std::size_t> size = std::nullopt) const {
    if (!has(key)) return fallback;
    const json& a = j_.at(key);
    if (!a.is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!a[i].is_number()) fail(key + "/" + std::to_string(i), "expected a number");
      out.push_back(a[i].get<double>());
    }
    if (size && out.size() != *size) fail(key, "expected " + std::to_string(*size) + " values");
    return out;
  }

 private:
  const json& j_;
  std::string pointer_;
};

template <typename Enum>
Enum parse_enum(const Node& n, const std::string& key, Enum fallback,
                std::initializer_list<std::pair<const char*, Enum>> table) {
  if (!n.has(key)) return fallback;
  const std::string v = n.text(key, "");
  for (const auto& [name, e] : table) {
    if (v == name) return e;
  }
  n.fail(key, "unknown value '" + v + "'");
}

json numbers_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> to_vector(const std::vector<double>& v) {
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out(i) = v[static_cast<std::size_t>(i)];
  return out;
}

template <int N>
std::vector<double> from_vector(const Eigen::Matrix<double, N, 1>& v) {
  return std::vector<double>(v.data(), v.data() + N);
}

// ---------------------------------------------------------------------------

using WindowKey = std::tuple<int, int, int>;

WindowKey key_of(points::Direction d, int first, int last) {
  return {d == points::Direction::kForward ? 0 : 1, first, last};
}

WindowKey key_of(const points::WindowForecast& w) { return key_of(w.direction, w.first_frame, w.last_frame); }

int sequence_length_of(const fs::path& dir) {
  try {
    const json meta = json::parse(read_text_file(dir / files::kSequence / "meta.json"));
    return meta.at("frame_count").get<int>();
  } catch (const json::exception& e) {
    throw MalformedFile(std::string("bad meta.json: ") + e.what());
  }
}

json entry_to_json(const forecast::TrackletEntry& e) {
  return {{"frame_index", e.frame_index}, {"box", box_to_json(e.box)}, {"score", e.score}};
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

json parse_line(const std::string& line, std::size_t number, const std::string& file) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw MalformedFile(file + " line " + std::to_string(number + 1) + ": " + e.what());
  }
}

NormalizationManifest load_or_build_manifest(const PipelineConfig& config) {
  if (!config.manifest.empty()) {
    try {
      return manifest_from_json(json::parse(read_text_file(config.manifest)));
    } catch (const json::exception& e) {
      throw MalformedFile(std::string("bad manifest: ") + e.what());
    }
  }
  return reference_manifest(config.predictor);
}

}  // namespace

std::string_view to_string(Mode m) { return m == Mode::kOnline ? "ONLINE" : "OFFLINE"; }

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kLidarOnly: return "LIDAR_ONLY";
    case Strategy::kModarOnly: return "MODAR_ONLY";
    case Strategy::kEarly: return "EARLY";
    case Strategy::kLate: return "LATE";
    case Strategy::kEarlyLate: return "EARLY_LATE";
  }
  return "EARLY";
}

std::string_view to_string(DetectorKind k) { return k == DetectorKind::kCluster ? "CLUSTER" : "ORACLE"; }

points::ModarConfig PipelineConfig::modar_config() const {
  return points::ModarConfig::with_counts(past_offsets, mode == Mode::kOnline ? 0 : future_offsets,
                                          predictor, trajectories_used);
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  const Node root(j, "");
  root.allow_only({"scenario", "dataset", "detector", "tracker", "predictor", "modar", "fusion", "eval",
                   "target_frames", "lidar_stack_frames", "output_dir", "manifest"});

  if (root.has("scenario") == root.has("dataset")) {
    root.fail("scenario", "exactly one of scenario and dataset is required");
  }
  if (root.has("scenario")) {
    const Node s = root.child("scenario");
    s.allow_only({"name", "seed", "frame_count"});
    c.scenario = s.text("name", "");
    try {
      sim::scenario_from_string(c.scenario);
    } catch (const UnknownScenario&) {
      s.fail("name", "unknown scenario '" + c.scenario + "'");
    }
    c.seed = s.unsigned_integer("seed", 0);
    if (s.has("frame_count")) {
      c.frame_count = s.integer("frame_count", 1);
      if (*c.frame_count < 1) s.fail("frame_count", "must be positive");
    }
  } else {
    c.dataset = root.text("dataset", "");
  }

  if (root.has("detector")) {
    const Node d = root.child("detector");
    d.allow_only({"kind", "cell_size", "min_points", "score_saturation", "ground_clearance", "ground_z",
                  "midpoint", "slope", "center_sigma", "size_sigma", "yaw_sigma", "score_sigma",
                  "false_positives_per_frame", "fp_half_extent"});
    c.detector = parse_enum(d, "kind", DetectorKind::kCluster,
                            {{"CLUSTER", DetectorKind::kCluster}, {"ORACLE", DetectorKind::kOracle}});
    c.cluster.cell_size = d.number("cell_size", c.cluster.cell_size);
    c.cluster.min_points = d.integer("min_points", c.cluster.min_points);
    c.cluster.score_saturation = d.number("score_saturation", c.cluster.score_saturation);
    c.cluster.ground_clearance = d.number("ground_clearance", c.cluster.ground_clearance);
    c.cluster.ground_z = d.number("ground_z", c.cluster.ground_z);
    if (c.cluster.cell_size <= 0.0) d.fail("cell_size", "must be positive");
    if (c.cluster.min_points < 1) d.fail("min_points", "must be at least 1");
    c.oracle.midpoint = d.number("midpoint", c.oracle.midpoint);
    c.oracle.slope = d.number("slope", c.oracle.slope);
    c.oracle.center_sigma = d.number("center_sigma", c.oracle.center_sigma);
    c.oracle.size_sigma = d.number("size_sigma", c.oracle.size_sigma);
    c.oracle.yaw_sigma = d.number("yaw_sigma", c.oracle.yaw_sigma);
    c.oracle.score_sigma = d.number("score_sigma", c.oracle.score_sigma);
    c.oracle.false_positives_per_frame =
        d.number("false_positives_per_frame", c.oracle.false_positives_per_frame);
    c.oracle.fp_half_extent = d.number("fp_half_extent", c.oracle.fp_half_extent);
  }

  if (root.has("tracker")) {
    const Node t = root.child("tracker");
    t.allow_only({"association_gate", "confirm_hits", "max_misses", "dt", "process_noise",
                  "measurement_noise", "initial_velocity_variance", "partial_ratio"});
    c.tracker.association_gate = t.number("association_gate", c.tracker.association_gate);
    c.tracker.confirm_hits = t.integer("confirm_hits", c.tracker.confirm_hits);
    c.tracker.max_misses = t.integer("max_misses", c.tracker.max_misses);
    c.tracker.dt = t.number("dt", c.tracker.dt);
    c.tracker.process_noise =
        to_vector<10>(t.numbers("process_noise", from_vector<10>(c.tracker.process_noise), 10));
    c.tracker.measurement_noise =
        to_vector<7>(t.numbers("measurement_noise", from_vector<7>(c.tracker.measurement_noise), 7));
    c.tracker.initial_velocity_variance = to_vector<3>(
        t.numbers("initial_velocity_variance", from_vector<3>(c.tracker.initial_velocity_variance), 3));
    c.tracker.partial_ratio = t.number("partial_ratio", c.tracker.partial_ratio);
    if (c.tracker.partial_ratio < 0.0 || c.tracker.partial_ratio > 1.0) t.fail("partial_ratio", "must lie in [0, 1]");
    if (c.tracker.confirm_hits < 1) t.fail("confirm_hits", "must be at least 1");
    if (c.tracker.max_misses < 0) t.fail("max_misses", "must be non-negative");
    if (c.tracker.dt <= 0.0) t.fail("dt", "must be positive");
    if ((c.tracker.process_noise.array() < 0.0).any()) t.fail("process_noise", "must be non-negative");
    if ((c.tracker.measurement_noise.array() <= 0.0).any()) t.fail("measurement_noise", "must be positive");
  }

  if (root.has("predictor")) {
    const Node p = root.child("predictor");
    p.allow_only({"kind"});
    const std::string kind = p.text("kind", "CONSTANT_VELOCITY");
    const auto parsed = forecast::predictor_from_string(kind);
    if (!parsed) p.fail("kind", "unknown predictor '" + kind + "'");
    c.predictor = *parsed;
  }

  if (root.has("modar")) {
    const Node m = root.child("modar");
    m.allow_only({"mode", "past", "future", "J"});
    c.mode = parse_enum(m, "mode", Mode::kOffline, {{"ONLINE", Mode::kOnline}, {"OFFLINE", Mode::kOffline}});
    c.past_offsets = m.integer("past", c.past_offsets);
    c.future_offsets = m.integer("future", c.mode == Mode::kOnline ? 0 : c.future_offsets);
    c.trajectories_used = m.integer("J", c.trajectories_used);
    if (c.past_offsets < 0 || c.past_offsets > forecast::kHorizon) m.fail("past", "must lie in 0..80");
    if (c.future_offsets < 0 || c.future_offsets > forecast::kHorizon) m.fail("future", "must lie in 0..80");
    if (c.mode == Mode::kOnline && c.future_offsets != 0) {
      m.fail("future", "ONLINE mode forbids future offsets");
    }
    if (c.trajectories_used < 1 || c.trajectories_used > 6) m.fail("J", "must lie in 1..6");
  }

  if (root.has("fusion")) {
    const Node f = root.child("fusion");
    f.allow_only({"strategy", "weights", "params"});
    c.strategy = parse_enum(f, "strategy", Strategy::kEarly,
                            {{"LIDAR_ONLY", Strategy::kLidarOnly},
                             {"MODAR_ONLY", Strategy::kModarOnly},
                             {"EARLY", Strategy::kEarly},
                             {"LATE", Strategy::kLate},
                             {"EARLY_LATE", Strategy::kEarlyLate}});
    if (f.has("weights")) {
      const Node w = f.child("weights");
      w.allow_only({"lidar", "modar", "offset_decay", "wbf_iou", "max_boxes"});
      c.weights.lidar = w.number("lidar", c.weights.lidar);
      c.weights.modar = w.number("modar", c.weights.modar);
      c.weights.offset_decay = w.numbers("offset_decay", c.weights.offset_decay);
      c.weights.wbf_iou = w.number("wbf_iou", c.weights.wbf_iou);
      const int max_boxes = w.integer("max_boxes", static_cast<int>(c.weights.max_boxes));
      if (max_boxes < 1) w.fail("max_boxes", "must be positive");
      c.weights.max_boxes = static_cast<std::size_t>(max_boxes);
      try {
        fusion::validate(c.weights);
      } catch (const ConfigError& e) {
        throw ConfigError(w.path("") + " " + e.what());
      }
    }
    if (f.has("params")) {
      const Node p = f.child("params");
      p.allow_only({"link_radius", "consensus_iou", "match_iou", "refine_lidar_weight",
                    "refine_modar_weight", "unmatched_discount", "occlusion_point_gate", "nms_iou",
                    "min_support"});
      auto& fp = c.fusion;
      fp.link_radius = p.number("link_radius", fp.link_radius);
      fp.consensus_iou = p.number("consensus_iou", fp.consensus_iou);
      fp.match_iou = p.number("match_iou", fp.match_iou);
      fp.refine_lidar_weight = p.number("refine_lidar_weight", fp.refine_lidar_weight);
      fp.refine_modar_weight = p.number("refine_modar_weight", fp.refine_modar_weight);
      fp.unmatched_discount = p.number("unmatched_discount", fp.unmatched_discount);
      fp.occlusion_point_gate = p.integer("occlusion_point_gate", fp.occlusion_point_gate);
      fp.nms_iou = p.number("nms_iou", fp.nms_iou);
      fp.min_support = p.integer("min_support", fp.min_support);
      if (fp.link_radius <= 0.0) p.fail("link_radius", "must be positive");
    }
  }

  if (root.has("eval")) {
    const Node e = root.child("eval");
    e.allow_only({"iou_threshold", "l1_more_than_points", "l2_min_points", "range_edges",
                  "speed_edges", "speed_names"});
    if (e.has("iou_threshold")) {
      const Node t = e.child("iou_threshold");
      t.allow_only({"VEHICLE", "PEDESTRIAN", "CYCLIST"});
      for (ObjectClass cls : kAllClasses) {
        const std::string name(to_string(cls));
        c.eval.iou_threshold[cls] = t.number(name, c.eval.iou_threshold[cls]);
      }
    }
    c.eval.l1_more_than_points = e.integer("l1_more_than_points", c.eval.l1_more_than_points);
    c.eval.l2_min_points = e.integer("l2_min_points", c.eval.l2_min_points);
    c.eval.range_edges = e.numbers("range_edges", c.eval.range_edges);
    c.eval.speed_edges = e.numbers("speed_edges", c.eval.speed_edges);
    if (e.has("speed_names")) {
      const json& names = e.raw("speed_names");
      if (!names.is_array()) e.fail("speed_names", "expected an array of strings");
      c.eval.speed_names.clear();
      for (const auto& n : names) {
        if (!n.is_string()) e.fail("speed_names", "expected an array of strings");
        c.eval.speed_names.push_back(n.get<std::string>());
      }
    }
    try {
      eval::validate(c.eval);
    } catch (const ConfigError& err) {
      throw ConfigError(e.path("") + " " + err.what());
    }
  }

  if (root.has("target_frames")) {
    const json& t = root.raw("target_frames");
    if (t.is_array()) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (!t[i].is_number_integer() || t[i].get<int>() < 0) {
          root.fail("target_frames/" + std::to_string(i), "expected a non-negative integer");
        }
        c.targets.frames.push_back(t[i].get<int>());
      }
    } else {
      const Node n = root.child("target_frames");
      n.allow_only({"first", "last", "stride"});
      c.targets.first = n.integer("first", 0);
      c.targets.last = n.integer("last", -1);
      c.targets.stride = n.integer("stride", 1);
      if (c.targets.first < 0) n.fail("first", "must be non-negative");
      if (c.targets.stride < 1) n.fail("stride", "must be positive");
    }
  }

  c.lidar_stack_frames = root.integer("lidar_stack_frames", 1);
  if (c.lidar_stack_frames < 1 || c.lidar_stack_frames > 3) {
    root.fail("lidar_stack_frames", "must lie in 1..3");
  }
  c.output_dir = root.text("output_dir", "");
  c.manifest = root.text("manifest", "");
  return c;
}

json config_to_json(const PipelineConfig& c) {
  json j;
  if (!c.scenario.empty()) {
    j["scenario"] = {{"name", c.scenario}, {"seed", c.seed}};
    if (c.frame_count) j["scenario"]["frame_count"] = *c.frame_count;
  } else {
    j["dataset"] = c.dataset;
  }
  j["detector"] = {{"kind", to_string(c.detector)},
                   {"cell_size", c.cluster.cell_size},
                   {"min_points", c.cluster.min_points},
                   {"score_saturation", c.cluster.score_saturation},
                   {"ground_clearance", c.cluster.ground_clearance},
                   {"ground_z", c.cluster.ground_z},
                   {"midpoint", c.oracle.midpoint},
                   {"slope", c.oracle.slope},
                   {"center_sigma", c.oracle.center_sigma},
                   {"size_sigma", c.oracle.size_sigma},
                   {"yaw_sigma", c.oracle.yaw_sigma},
                   {"score_sigma", c.oracle.score_sigma},
                   {"false_positives_per_frame", c.oracle.false_positives_per_frame},
                   {"fp_half_extent", c.oracle.fp_half_extent}};
  j["tracker"] = {{"association_gate", c.tracker.association_gate},
                  {"confirm_hits", c.tracker.confirm_hits},
                  {"max_misses", c.tracker.max_misses},
                  {"dt", c.tracker.dt},
                  {"process_noise", numbers_json(c.tracker.process_noise)},
                  {"measurement_noise", numbers_json(c.tracker.measurement_noise)},
                  {"initial_velocity_variance", numbers_json(c.tracker.initial_velocity_variance)},
                  {"partial_ratio", c.tracker.partial_ratio}};
  j["predictor"] = {{"kind", forecast::to_string(c.predictor)}};
  j["modar"] = {{"mode", to_string(c.mode)},
                {"past", c.past_offsets},
                {"future", c.future_offsets},
                {"J", c.trajectories_used}};
  j["fusion"] = {{"strategy", to_string(c.strategy)},
                 {"weights",
                  {{"lidar", c.weights.lidar},
                   {"modar", c.weights.modar},
                   {"offset_decay", c.weights.offset_decay},
                   {"wbf_iou", c.weights.wbf_iou},
                   {"max_boxes", c.weights.max_boxes}}},
                 {"params",
                  {{"link_radius", c.fusion.link_radius},
                   {"consensus_iou", c.fusion.consensus_iou},
                   {"match_iou", c.fusion.match_iou},
                   {"refine_lidar_weight", c.fusion.refine_lidar_weight},
                   {"refine_modar_weight", c.fusion.refine_modar_weight},
                   {"unmatched_discount", c.fusion.unmatched_discount},
                   {"occlusion_point_gate", c.fusion.occlusion_point_gate},
                   {"nms_iou", c.fusion.nms_iou},
                   {"min_support", c.fusion.min_support}}}};
  json thresholds;
  for (const auto& [cls, t] : c.eval.iou_threshold) thresholds[std::string(to_string(cls))] = t;
  j["eval"] = {{"iou_threshold", thresholds},
               {"l1_more_than_points", c.eval.l1_more_than_points},
               {"l2_min_points", c.eval.l2_min_points},
               {"range_edges", c.eval.range_edges},
               {"speed_edges", c.eval.speed_edges},
               {"speed_names", c.eval.speed_names}};
  if (!c.targets.frames.empty()) {
    j["target_frames"] = c.targets.frames;
  } else {
    j["target_frames"] = {{"first", c.targets.first}, {"last", c.targets.last}, {"stride", c.targets.stride}};
  }
  j["lidar_stack_frames"] = c.lidar_stack_frames;
  j["output_dir"] = c.output_dir;
  if (!c.manifest.empty()) j["manifest"] = c.manifest;
  return j;
}

PipelineConfig load_config(const fs::path& file) {
  json j;
  try {
    j = json::parse(read_text_file(file));
  } catch (const json::exception& e) {
    throw ConfigError("/: " + file.string() + " is not valid JSON: " + e.what());
  } catch (const IoFailure& e) {
    throw ConfigError(std::string("/: ") + e.what());
  }
  return config_from_json(j);
}

std::vector<int> resolve_targets(const TargetFrames& targets, int sequence_length) {
  std::vector<int> out;
  if (!targets.frames.empty()) {
    for (int f : targets.frames) {
      if (f < 0 || f >= sequence_length) {
        throw ConfigError("/target_frames: frame " + std::to_string(f) + " outside the sequence");
      }
      out.push_back(f);
    }
  } else {
    const int last = targets.last < 0 ? sequence_length - 1 : std::min(targets.last, sequence_length - 1);
    for (int f = targets.first; f <= last; f += targets.stride) out.push_back(f);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SequenceDataset make_sequence(const PipelineConfig& config) {
  if (!config.dataset.empty()) return read_sequence(config.dataset);
  sim::SceneConfig scene = sim::scenario_library(sim::scenario_from_string(config.scenario), config.seed);
  if (config.frame_count) scene.frame_count = *config.frame_count;
  return sim::simulate(scene);
}

std::string detection_fingerprint(const SequenceDataset& sequence, const PipelineConfig& config) {
  const json j = config_to_json(config);
  return fingerprint_of(sequence.meta.sequence_id + "|" + std::to_string(sequence.frames.size()) + "|" +
                        j.at("detector").dump());
}

DetectionCache detect_all(const SequenceDataset& sequence, const PipelineConfig& config) {
  DetectionCache cache;
  cache.fingerprint = detection_fingerprint(sequence, config);
  for (const Frame& f : sequence.frames) {
    cache.frames[f.frame_index] =
        config.detector == DetectorKind::kCluster
            ? detect::detect_cluster(f.points, config.cluster, f.ego_pose)
            : detect::detect_oracle(f.gt_boxes, config.oracle,
                                    substream_seed(config.seed, "detect",
                                                   static_cast<std::uint64_t>(f.frame_index)),
                                    f.ego_pose);
  }
  return cache;
}

NormalizationManifest reference_manifest(forecast::PredictorKind predictor) {
  const SequenceDataset reference =
      sim::simulate(sim::scenario_library(sim::Scenario::kMixedCity, 0));
  const std::span<const SequenceDataset> datasets(&reference, 1);
  const auto spreads = forecast::collect_spread_samples(datasets, predictor);
  return build_normalization(datasets, spreads);
}

std::vector<points::WindowForecast> track_windows(const DetectionCache& cache,
                                                  const std::vector<int>& targets,
                                                  int sequence_length,
                                                  const PipelineConfig& config) {
  const points::ModarConfig mc = config.modar_config();
  std::set<WindowKey> keys;
  for (int t0 : targets) {
    for (const points::Window& w : points::build_windows(t0, mc, sequence_length)) {
      keys.insert(key_of(w.direction, w.first_frame, w.last_frame));
    }
  }
  std::vector<points::WindowForecast> out;
  out.reserve(keys.size());
  for (const auto& [dir, first, last] : keys) {
    out.push_back(points::track_window(
        cache, dir == 0 ? points::Direction::kForward : points::Direction::kReverse, first, last,
        config.tracker));
  }
  return out;
}

void forecast_windows(std::vector<points::WindowForecast>& windows, const std::vector<int>& targets,
                      int sequence_length, const PipelineConfig& config) {
  const points::ModarConfig mc = config.modar_config();
  std::map<WindowKey, std::vector<int>> users;
  for (int t0 : targets) {
    for (const points::Window& w : points::build_windows(t0, mc, sequence_length)) {
      users[key_of(w.direction, w.first_frame, w.last_frame)].push_back(t0);
    }
  }
  for (points::WindowForecast& w : windows) {
    points::forecast_window(w, config.predictor);
    const auto& t0s = users[key_of(w)];
    const bool forward = w.direction == points::Direction::kForward;
    for (points::WindowTrack& t : w.tracks) {
      if (t.entries.empty()) continue;
      const int anchor = forward ? t.entries.back().frame_index : t.entries.front().frame_index;
      std::set<int> needed;
      for (int t0 : t0s) needed.insert(forward ? t0 - anchor : anchor - t0);
      for (forecast::Trajectory& traj : t.trajectories) {
        std::erase_if(traj.waypoints,
                      [&](const forecast::Waypoint& wp) { return needed.count(wp.offset) == 0; });
      }
    }
  }
}

std::map<int, std::vector<points::ModarPoint>> modar_for_targets(
    const std::vector<points::WindowForecast>& windows, const std::vector<int>& targets,
    int sequence_length, const PipelineConfig& config, const NormalizationManifest& manifest) {
  std::map<WindowKey, const points::WindowForecast*> index;
  for (const auto& w : windows) index[key_of(w)] = &w;
  const points::ModarConfig mc = config.modar_config();
  std::map<int, std::vector<points::ModarPoint>> out;
  for (int t0 : targets) {
    auto& pts = out[t0];
    for (const points::Window& w : points::build_windows(t0, mc, sequence_length)) {
      auto it = index.find(key_of(w.direction, w.first_frame, w.last_frame));
      if (it == index.end()) {
        throw InvariantViolation("window [" + std::to_string(w.first_frame) + ", " +
                                 std::to_string(w.last_frame) + "] was not forecast");
      }
      auto encoded = points::encode_window(*it->second, t0, mc.trajectories_used, manifest);
      pts.insert(pts.end(), encoded.begin(), encoded.end());
    }
  }
  return out;
}

eval::DetectionsByFrame fuse_targets(const SequenceDataset& sequence, const DetectionCache& cache,
                                     const std::map<int, std::vector<points::ModarPoint>>& modar,
                                     const std::vector<int>& targets, const PipelineConfig& config,
                                     const NormalizationManifest& manifest) {
  static const std::vector<points::ModarPoint> kNoPoints;
  eval::DetectionsByFrame out;
  for (int t0 : targets) {
    const Frame& target = sequence.frames.at(static_cast<std::size_t>(t0));
    std::vector<fusion::LidarFrameInput> stack;
    for (int k = 0; k < config.lidar_stack_frames && t0 - k >= 0; ++k) {
      const Frame& f = sequence.frames[static_cast<std::size_t>(t0 - k)];
      stack.push_back({f.points, f.ego_pose, -k * sequence.meta.frame_period_s});
    }
    auto mit = modar.find(t0);
    const auto& pts = mit == modar.end() ? kNoPoints : mit->second;

    std::vector<Box3D> lidar_boxes;
    if (config.lidar_stack_frames == 1 || config.detector == DetectorKind::kOracle) {
      auto cit = cache.frames.find(t0);
      if (cit == cache.frames.end()) throw MissingFrame("detection cache lacks frame " + std::to_string(t0));
      lidar_boxes = cit->second;
    } else {
      const auto lidar_only = fusion::assemble_early(stack, {}, target.ego_pose);
      std::vector<LidarPoint> raw;
      for (const auto& p : lidar_only) {
        raw.push_back({static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                       static_cast<float>(p.feature[0])});
      }
      lidar_boxes = detect::detect_cluster(raw, config.cluster, target.ego_pose);
    }

    auto early = [&] {
      const auto fused = fusion::assemble_early(stack, pts, target.ego_pose);
      return fusion::fusion_detector_with_boxes(lidar_boxes, fused, config.fusion, manifest,
                                                target.ego_pose);
    };
    std::vector<Box3D> boxes;
    switch (config.strategy) {
      case Strategy::kLidarOnly:
        boxes = detect::nms(lidar_boxes, config.fusion.nms_iou, true);
        break;
      case Strategy::kModarOnly:
        boxes = fusion::modar_only_detect(pts, config.weights, manifest);
        break;
      case Strategy::kEarly:
        boxes = early();
        break;
      case Strategy::kLate: {
        const auto lidar = detect::nms(lidar_boxes, config.fusion.nms_iou, true);
        boxes = fusion::late_fuse(lidar, fusion::modar_only_detect(pts, config.weights, manifest),
                                  config.weights);
        break;
      }
      case Strategy::kEarlyLate:
        boxes = fusion::early_plus_late(early(), pts, config.weights, manifest);
        break;
    }
    out[t0] = std::move(boxes);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string windows_to_jsonl(const std::vector<points::WindowForecast>& windows, bool with_forecasts) {
  std::string out;
  for (const auto& w : windows) {
    json tracks = json::array();
    for (const auto& t : w.tracks) {
      json entries = json::array();
      for (const auto& e : t.entries) entries.push_back(entry_to_json(e));
      json jt = {{"track_id", t.track_id},
                 {"class", to_string(t.object_class)},
                 {"tracking_score", t.tracking_score},
                 {"entries", std::move(entries)}};
      if (with_forecasts) {
        json trajs = json::array();
        for (const auto& traj : t.trajectories) {
          json wps = json::array();
          for (const auto& wp : traj.waypoints) {
            wps.push_back({wp.offset, wp.x, wp.y, wp.yaw, wp.std_x, wp.std_y});
          }
          trajs.push_back({{"confidence", traj.confidence}, {"waypoints", std::move(wps)}});
        }
        jt["trajectories"] = std::move(trajs);
      }
      tracks.push_back(std::move(jt));
    }
    out += json{{"direction", points::to_string(w.direction)},
                {"first_frame", w.first_frame},
                {"last_frame", w.last_frame},
                {"tracks", std::move(tracks)}}
               .dump();
    out += '\n';
  }
  return out;
}

std::vector<points::WindowForecast> windows_from_jsonl(const std::string& text) {
  std::vector<points::WindowForecast> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json j = parse_line(lines[i], i, "windows");
    try {
      points::WindowForecast w;
      w.direction = points::direction_from_string(j.at("direction").get<std::string>());
      w.first_frame = j.at("first_frame").get<int>();
      w.last_frame = j.at("last_frame").get<int>();
      for (const auto& jt : j.at("tracks")) {
        points::WindowTrack t;
        t.track_id = jt.at("track_id").get<std::int64_t>();
        t.object_class = parse_class(jt.at("class").get<std::string>());
        t.tracking_score = jt.at("tracking_score").get<double>();
        for (const auto& e : jt.at("entries")) {
          t.entries.push_back({e.at("frame_index").get<int>(), box_from_json(e.at("box")),
                               e.at("score").get<double>()});
        }
        if (jt.contains("trajectories")) {
          for (const auto& jtraj : jt.at("trajectories")) {
            forecast::Trajectory traj;
            traj.confidence = jtraj.at("confidence").get<double>();
            for (const auto& wp : jtraj.at("waypoints")) {
              traj.waypoints.push_back({wp.at(0).get<int>(), wp.at(1).get<double>(), wp.at(2).get<double>(),
                                        wp.at(3).get<double>(), wp.at(4).get<double>(),
                                        wp.at(5).get<double>()});
            }
            t.trajectories.push_back(std::move(traj));
          }
        }
        w.tracks.push_back(std::move(t));
      }
      out.push_back(std::move(w));
    } catch (const json::exception& e) {
      throw MalformedFile("windows line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::string modar_to_jsonl(const std::map<int, std::vector<points::ModarPoint>>& modar) {
  std::string out;
  for (const auto& [frame, pts] : modar) {
    for (const auto& p : pts) {
      out += points::point_to_json(p, frame).dump();
      out += '\n';
    }
  }
  return out;
}

std::map<int, std::vector<points::ModarPoint>> modar_from_jsonl(const std::string& text) {
  std::map<int, std::vector<points::ModarPoint>> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json j = parse_line(lines[i], i, "modar points");
    try {
      out[j.at("frame_index").get<int>()].push_back(points::point_from_json(j));
    } catch (const json::exception& e) {
      throw MalformedFile("modar points line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::string boxes_to_jsonl(const eval::DetectionsByFrame& boxes) {
  std::string out;
  for (const auto& [frame, list] : boxes) {
    for (const Box3D& b : list) {
      json j = box_to_json(b);
      j["frame_index"] = frame;
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

eval::DetectionsByFrame boxes_from_jsonl(const std::string& text) {
  eval::DetectionsByFrame out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json j = parse_line(lines[i], i, "boxes");
    try {
      out[j.at("frame_index").get<int>()].push_back(box_from_json(j));
    } catch (const json::exception& e) {
      throw MalformedFile("boxes line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void stage_simulate(const PipelineConfig& config, const fs::path& dir) {
  run_stage("simulate", [&] {
    const SequenceDataset seq = make_sequence(config);
    write_sequence(seq, dir / files::kSequence);
    write_text_file(dir / "config.json", config_to_json(config).dump(2) + "\n");
  });
}

void stage_detect(const PipelineConfig& config, const fs::path& dir) {
  run_stage("detect", [&] {
    const SequenceDataset seq = read_sequence(dir / files::kSequence);
    const fs::path file = dir / files::kDetections;
    if (fs::exists(file) && load_detection_cache(file, detection_fingerprint(seq, config))) return;
    write_detection_cache(detect_all(seq, config), file);
  });
}

void stage_track(const PipelineConfig& config, const fs::path& dir) {
  if (!config.uses_modar()) return;
  run_stage("track", [&] {
    const int length = sequence_length_of(dir);
    const DetectionCache cache = read_detection_cache(dir / files::kDetections);
    const auto targets = resolve_targets(config.targets, length);
    write_text_file(dir / files::kTracks,
                    windows_to_jsonl(track_windows(cache, targets, length, config), false));
  });
}

void stage_forecast(const PipelineConfig& config, const fs::path& dir) {
  if (!config.uses_modar()) return;
  run_stage("forecast", [&] {
    const int length = sequence_length_of(dir);
    auto windows = windows_from_jsonl(read_text_file(dir / files::kTracks));
    forecast_windows(windows, resolve_targets(config.targets, length), length, config);
    write_text_file(dir / files::kForecasts, windows_to_jsonl(windows, true));
  });
}

void stage_modar(const PipelineConfig& config, const fs::path& dir) {
  if (!config.uses_modar()) return;
  run_stage("modar", [&] {
    const int length = sequence_length_of(dir);
    const auto windows = windows_from_jsonl(read_text_file(dir / files::kForecasts));
    const NormalizationManifest manifest = load_or_build_manifest(config);
    write_text_file(dir / files::kManifest, manifest_to_json(manifest).dump(2) + "\n");
    const auto pts =
        modar_for_targets(windows, resolve_targets(config.targets, length), length, config, manifest);
    write_text_file(dir / files::kModarPoints, modar_to_jsonl(pts));
  });
}

void stage_fuse(const PipelineConfig& config, const fs::path& dir) {
  run_stage("fuse", [&] {
    const SequenceDataset seq = read_sequence(dir / files::kSequence);
    const DetectionCache cache = read_detection_cache(dir / files::kDetections);
    std::map<int, std::vector<points::ModarPoint>> pts;
    NormalizationManifest manifest;
    if (config.uses_modar()) {
      pts = modar_from_jsonl(read_text_file(dir / files::kModarPoints));
      try {
        manifest = manifest_from_json(json::parse(read_text_file(dir / files::kManifest)));
      } catch (const json::exception& e) {
        throw MalformedFile(std::string("bad manifest: ") + e.what());
      }
    }
    const auto targets = resolve_targets(config.targets, static_cast<int>(seq.frames.size()));
    write_text_file(dir / files::kBoxes,
                    boxes_to_jsonl(fuse_targets(seq, cache, pts, targets, config, manifest)));
  });
}

eval::EvalResult stage_eval(const PipelineConfig& config, const fs::path& dir) {
  return run_stage("eval", [&] {
    const SequenceDataset seq = read_sequence(dir / files::kSequence);
    const fs::path boxes_file = dir / files::kBoxes;
    const auto boxes = fs::exists(boxes_file) ? boxes_from_jsonl(read_text_file(boxes_file))
                                              : eval::DetectionsByFrame{};
    const auto targets = resolve_targets(config.targets, static_cast<int>(seq.frames.size()));
    const std::set<int> frames(targets.begin(), targets.end());
    eval::EvalResult result = eval::evaluate(boxes, seq, config.eval, frames);
    write_text_file(dir / files::kEval, eval::result_to_json(result).dump(2) + "\n");
    return result;
  });
}

void stage_report(const std::vector<fs::path>& runs, const fs::path& out) {
  run_stage("report", [&] {
    if (runs.empty()) throw ConfigError("/: report needs at least one run directory");
    std::vector<eval::SweepPoint> sweep;
    eval::EvalResult first;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      eval::EvalResult r;
      try {
        r = eval::result_from_json(json::parse(read_text_file(runs[i] / files::kEval)));
      } catch (const json::exception& e) {
        throw MalformedFile(std::string("bad eval.json: ") + e.what());
      }
      if (i == 0) first = r;
      const fs::path config_file = runs[i] / "config.json";
      if (fs::exists(config_file)) {
        const PipelineConfig c = load_config(config_file);
        if (c.uses_modar()) {
          const int n = c.past_offsets + (c.mode == Mode::kOffline ? c.future_offsets : 0);
          sweep.push_back({n, std::string(to_string(c.mode)) + " " + std::string(to_string(c.strategy)),
                           r.mean_aph_l2.value_or(0.0)});
        }
      }
    }
    std::stable_sort(sweep.begin(), sweep.end(), [](const auto& a, const auto& b) {
      return a.num_predictions < b.num_predictions;
    });
    eval::write_report(first, sweep, out);
  });
}

eval::EvalResult run_pipeline(const PipelineConfig& config, const fs::path& dir) {
  stage_simulate(config, dir);
  stage_detect(config, dir);
  stage_track(config, dir);
  stage_forecast(config, dir);
  stage_modar(config, dir);
  stage_fuse(config, dir);
  eval::EvalResult result = stage_eval(config, dir);
  stage_report({dir}, dir / files::kReport);
  return result;
}

RunOutput run_in_memory(const PipelineConfig& config, const SequenceDataset& sequence,
                        const DetectionCache& cache, const NormalizationManifest& manifest) {
  const int length = static_cast<int>(sequence.frames.size());
  const auto targets = resolve_targets(config.targets, length);
  RunOutput out;
  if (config.uses_modar()) {
    auto windows = track_windows(cache, targets, length, config);
    forecast_windows(windows, targets, length, config);
    out.modar = modar_for_targets(windows, targets, length, config, manifest);
  }
  out.boxes = fuse_targets(sequence, cache, out.modar, targets, config, manifest);
  const std::set<int> frames(targets.begin(), targets.end());
  out.result = eval::evaluate(out.boxes, sequence, config.eval, frames);
  return out;
}

}  // namespace modar::pipeline
