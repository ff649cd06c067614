#include "modar/dataio.hpp"

#include "modar/errors.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

namespace modar {

namespace fs = std::filesystem;
using nlohmann::json;

std::int64_t SequenceDataset::period_us() const {
  return static_cast<std::int64_t>(std::llround(meta.frame_period_s * 1e6));
}

void validate(const SequenceDataset& dataset) {
  const std::int64_t period = dataset.period_us();
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    const Frame& f = dataset.frames[i];
    if (f.frame_index != static_cast<int>(i)) {
      throw InvariantViolation("frame_index must increase from 0; got " +
                               std::to_string(f.frame_index) + " at position " +
                               std::to_string(i));
    }
    if (i > 0) {
      const std::int64_t expected =
          dataset.frames.front().timestamp_us + static_cast<std::int64_t>(i) * period;
      if (std::llabs(f.timestamp_us - expected) > 1 ||
          f.timestamp_us <= dataset.frames[i - 1].timestamp_us) {
        throw InvariantViolation("timestamp of frame " + std::to_string(i) +
                                 " breaks the constant period");
      }
    }
    if (!f.ego_pose.is_valid()) {
      throw InvariantViolation("ego pose of frame " + std::to_string(i) + " is not rigid");
    }
    for (const GtBox& gt : f.gt_boxes) {
      if (gt.num_points_inside < 0 || !(gt.occluded_fraction >= 0.0) ||
          !(gt.occluded_fraction <= 1.0) || !is_valid(gt.box)) {
        throw InvariantViolation("invalid gt box for track " + std::to_string(gt.track_id) +
                                 " in frame " + std::to_string(i));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// JSON helpers

ObjectClass parse_class(const std::string& name) {
  const auto cls = class_from_string(name);
  if (!cls) throw MalformedFile("unknown class '" + name + "'");
  return *cls;
}

json box_to_json(const Box3D& box) {
  return json{{"cx", box.cx},         {"cy", box.cy},
              {"cz", box.cz},         {"length", box.length},
              {"width", box.width},   {"height", box.height},
              {"yaw", box.yaw},       {"class", std::string(to_string(box.object_class))},
              {"score", box.score}};
}

Box3D box_from_json(const json& j) {
  Box3D box;
  box.cx = j.at("cx").get<double>();
  box.cy = j.at("cy").get<double>();
  box.cz = j.at("cz").get<double>();
  box.length = j.at("length").get<double>();
  box.width = j.at("width").get<double>();
  box.height = j.at("height").get<double>();
  box.yaw = j.at("yaw").get<double>();
  const auto name = j.at("class").get<std::string>();
  const auto cls = class_from_string(name);
  if (!cls) throw MalformedFile("unknown class '" + name + "'");
  box.object_class = *cls;
  box.score = j.at("score").get<double>();
  return box;
}

json gt_to_json(const GtBox& gt) {
  json j = box_to_json(gt.box);
  j["track_id"] = gt.track_id;
  j["speed_mps"] = gt.speed_mps;
  j["num_points_inside"] = gt.num_points_inside;
  j["occluded_fraction"] = gt.occluded_fraction;
  return j;
}

GtBox gt_from_json(const json& j) {
  GtBox gt;
  gt.box = box_from_json(j);
  gt.track_id = j.at("track_id").get<std::int64_t>();
  gt.speed_mps = j.at("speed_mps").get<double>();
  gt.num_points_inside = j.at("num_points_inside").get<int>();
  gt.occluded_fraction = j.at("occluded_fraction").get<double>();
  return gt;
}

// ---------------------------------------------------------------------------
// Files

void write_text_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot open " + file.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoFailure("write failed for " + file.string());
}

std::string read_text_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + file.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

namespace {

void write_bytes(const fs::path& file, std::span<const std::uint8_t> bytes) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot open " + file.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoFailure("write failed for " + file.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + file.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>((bits >> (8 * k)) & 0xFFU));
}

float get_f32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(bytes[offset + k]) << (8 * k);
  return std::bit_cast<float>(bits);
}

fs::path points_path(const fs::path& dir, int frame_index) {
  return dir / ("points_" + std::to_string(frame_index) + ".bin");
}

json meta_to_json(const SequenceMeta& meta, std::size_t frame_count) {
  json classes = json::array();
  for (ObjectClass c : meta.classes) classes.push_back(std::string(to_string(c)));
  json sizes = json::object();
  for (const auto& [c, s] : meta.default_sizes) {
    sizes[std::string(to_string(c))] = json::array({s.length, s.width, s.height});
  }
  return json{{"sequence_id", meta.sequence_id},
              {"frame_count", frame_count},
              {"frame_period_s", meta.frame_period_s},
              {"classes", classes},
              {"default_sizes", sizes}};
}

}  // namespace

std::vector<std::uint8_t> encode_points(std::span<const LidarPoint> points) {
  std::vector<std::uint8_t> out;
  out.reserve(points.size() * 16);
  for (const LidarPoint& p : points) {
    put_f32(out, p.x);
    put_f32(out, p.y);
    put_f32(out, p.z);
    put_f32(out, p.intensity);
  }
  return out;
}

std::vector<LidarPoint> decode_points(std::span<const std::uint8_t> bytes, const std::string& name) {
  if (bytes.size() % 16 != 0) {
    throw MalformedFile(name + ": length " + std::to_string(bytes.size()) +
                        " is not a multiple of 16 (trailing bytes at offset " +
                        std::to_string(bytes.size() - bytes.size() % 16) + ")");
  }
  std::vector<LidarPoint> points(bytes.size() / 16);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::size_t o = 16 * i;
    points[i] = {get_f32(bytes, o), get_f32(bytes, o + 4), get_f32(bytes, o + 8),
                 get_f32(bytes, o + 12)};
  }
  return points;
}

void write_sequence(const SequenceDataset& dataset, const fs::path& directory) {
  validate(dataset);
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoFailure("cannot create " + directory.string() + ": " + ec.message());

  write_text_file(directory / "meta.json",
                  meta_to_json(dataset.meta, dataset.frames.size()).dump(2) + "\n");
  if (dataset.frames.empty()) return;

  std::string lines;
  for (const Frame& f : dataset.frames) {
    json gts = json::array();
    for (const GtBox& gt : f.gt_boxes) gts.push_back(gt_to_json(gt));
    const auto pose = f.ego_pose.row_major();
    json record{{"frame_index", f.frame_index},
                {"timestamp_us", f.timestamp_us},
                {"ego_pose", std::vector<double>(pose.begin(), pose.end())},
                {"gt_boxes", gts}};
    lines += record.dump();
    lines += '\n';
    write_bytes(points_path(directory, f.frame_index), encode_points(f.points));
  }
  write_text_file(directory / "frames.jsonl", lines);
}

SequenceDataset read_sequence(const fs::path& directory) {
  if (!fs::is_directory(directory)) throw IoFailure(directory.string() + " is not a directory");
  SequenceDataset ds;
  std::size_t frame_count = 0;
  try {
    const json meta = json::parse(read_text_file(directory / "meta.json"));
    ds.meta.sequence_id = meta.at("sequence_id").get<std::string>();
    ds.meta.frame_period_s = meta.at("frame_period_s").get<double>();
    frame_count = meta.at("frame_count").get<std::size_t>();
    ds.meta.classes.clear();
    for (const auto& c : meta.at("classes")) {
      const auto cls = class_from_string(c.get<std::string>());
      if (!cls) throw MalformedFile("meta.json: unknown class");
      ds.meta.classes.push_back(*cls);
    }
    for (const auto& [name, s] : meta.at("default_sizes").items()) {
      const auto cls = class_from_string(name);
      if (!cls) throw MalformedFile("meta.json: unknown class in default_sizes");
      ds.meta.default_sizes[*cls] = {s.at(0).get<double>(), s.at(1).get<double>(),
                                     s.at(2).get<double>()};
    }
  } catch (const json::exception& e) {
    throw MalformedFile("meta.json: " + std::string(e.what()));
  }
  if (frame_count == 0) return ds;

  std::istringstream lines(read_text_file(directory / "frames.jsonl"));
  std::string line;
  std::size_t offset = 0;
  int expected_index = 0;
  while (std::getline(lines, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    Frame f;
    try {
      const json rec = json::parse(line);
      f.frame_index = rec.at("frame_index").get<int>();
      f.timestamp_us = rec.at("timestamp_us").get<std::int64_t>();
      f.ego_pose = Pose::from_row_major(rec.at("ego_pose").get<std::vector<double>>());
      for (const auto& g : rec.at("gt_boxes")) f.gt_boxes.push_back(gt_from_json(g));
    } catch (const json::exception& e) {
      throw MalformedFile("frames.jsonl: frame " + std::to_string(expected_index) +
                          " at byte offset " + std::to_string(line_offset) + ": " + e.what());
    }
    if (f.frame_index != expected_index) {
      throw MalformedFile("frames.jsonl: frame " + std::to_string(f.frame_index) +
                          " out of order at byte offset " + std::to_string(line_offset) +
                          " (expected " + std::to_string(expected_index) + ")");
    }
    const fs::path pts = points_path(directory, f.frame_index);
    if (!fs::exists(pts)) {
      throw MissingFrame("missing " + pts.filename().string() + " for frame " +
                         std::to_string(f.frame_index));
    }
    f.points = decode_points(read_bytes(pts), pts.filename().string());
    ds.frames.push_back(std::move(f));
    ++expected_index;
  }
  if (ds.frames.size() != frame_count) {
    throw MissingFrame("meta.json declares " + std::to_string(frame_count) + " frames, found " +
                       std::to_string(ds.frames.size()));
  }
  try {
    validate(ds);
  } catch (const InvariantViolation& e) {
    throw MalformedFile(std::string("frames.jsonl: ") + e.what());
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Normalization

const ClassSizeStats& NormalizationManifest::size_stats(ObjectClass c) const {
  const auto it = sizes.find(c);
  if (it == sizes.end()) throw EmptyClass(std::string(to_string(c)) + " missing from manifest");
  return it->second;
}

namespace {

// Welford accumulator, population variance.
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double stddev() const {
    if (n == 0) return kMinStd;
    return std::max(kMinStd, std::sqrt(std::max(0.0, m2 / static_cast<double>(n))));
  }
};

}  // namespace

NormalizationManifest build_normalization(std::span<const SequenceDataset> datasets,
                                          std::span<const Vec2> spread_samples) {
  std::map<ObjectClass, std::array<RunningStats, 3>> acc;
  for (const SequenceDataset& ds : datasets) {
    for (const Frame& f : ds.frames) {
      for (const GtBox& gt : f.gt_boxes) {
        auto& a = acc[gt.box.object_class];
        a[0].add(gt.box.length);
        a[1].add(gt.box.width);
        a[2].add(gt.box.height);
      }
    }
  }
  NormalizationManifest m;
  for (ObjectClass c : kAllClasses) {
    const auto it = acc.find(c);
    if (it == acc.end()) throw EmptyClass("no gt boxes of class " + std::string(to_string(c)));
    const auto& a = it->second;
    m.sizes[c] = ClassSizeStats{{a[0].mean, a[1].mean, a[2].mean},
                                {a[0].stddev(), a[1].stddev(), a[2].stddev()}};
  }
  RunningStats sx, sy;
  for (const Vec2& s : spread_samples) {
    sx.add(s.x());
    sy.add(s.y());
  }
  m.spread_mean = Vec2(sx.mean, sy.mean);
  m.spread_std = Vec2(sx.stddev(), sy.stddev());
  return m;
}

json manifest_to_json(const NormalizationManifest& manifest) {
  json sizes = json::object();
  for (const auto& [c, s] : manifest.sizes) {
    sizes[std::string(to_string(c))] = {
        {"mean", {s.mean.length, s.mean.width, s.mean.height}},
        {"std", {s.stddev.length, s.stddev.width, s.stddev.height}}};
  }
  return json{{"sizes", sizes},
              {"spread_mean", {manifest.spread_mean.x(), manifest.spread_mean.y()}},
              {"spread_std", {manifest.spread_std.x(), manifest.spread_std.y()}}};
}

NormalizationManifest manifest_from_json(const json& j) {
  NormalizationManifest m;
  try {
    for (const auto& [name, s] : j.at("sizes").items()) {
      const auto cls = class_from_string(name);
      if (!cls) throw MalformedFile("manifest: unknown class " + name);
      const auto& mean = s.at("mean");
      const auto& sd = s.at("std");
      m.sizes[*cls] = {{mean.at(0).get<double>(), mean.at(1).get<double>(), mean.at(2).get<double>()},
                       {sd.at(0).get<double>(), sd.at(1).get<double>(), sd.at(2).get<double>()}};
    }
    m.spread_mean = Vec2(j.at("spread_mean").at(0).get<double>(), j.at("spread_mean").at(1).get<double>());
    m.spread_std = Vec2(j.at("spread_std").at(0).get<double>(), j.at("spread_std").at(1).get<double>());
  } catch (const json::exception& e) {
    throw MalformedFile(std::string("manifest: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Detection cache

void write_detection_cache(const DetectionCache& cache, const fs::path& file) {
  json frames = json::array();
  for (const auto& [idx, boxes] : cache.frames) {
    json list = json::array();
    for (const Box3D& b : boxes) list.push_back(box_to_json(b));
    frames.push_back({{"frame_index", idx}, {"boxes", list}});
  }
  write_text_file(file, json{{"fingerprint", cache.fingerprint}, {"frames", frames}}.dump() + "\n");
}

DetectionCache read_detection_cache(const fs::path& file) {
  DetectionCache cache;
  try {
    const json j = json::parse(read_text_file(file));
    cache.fingerprint = j.at("fingerprint").get<std::string>();
    for (const auto& f : j.at("frames")) {
      auto& boxes = cache.frames[f.at("frame_index").get<int>()];
      for (const auto& b : f.at("boxes")) boxes.push_back(box_from_json(b));
    }
  } catch (const json::exception& e) {
    throw MalformedFile(file.filename().string() + ": " + e.what());
  }
  return cache;
}

std::optional<DetectionCache> load_detection_cache(const fs::path& file,
                                                   const std::string& fingerprint) {
  if (!fs::exists(file)) return std::nullopt;
  DetectionCache cache = read_detection_cache(file);
  if (cache.fingerprint != fingerprint) return std::nullopt;
  return cache;
}

std::string fingerprint_of(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace modar
