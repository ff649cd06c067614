#include "modar/errors.hpp"
#include "modar/pipeline.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace modar::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using testing::scratch_dir;

json small_config(const std::string& scenario, const std::string& strategy) {
  return json{{"scenario", {{"name", scenario}, {"seed", 1}, {"frame_count", 40}}},
              {"modar", {{"mode", "OFFLINE"}, {"past", 10}, {"future", 10}}},
              {"fusion", {{"strategy", strategy}}},
              {"target_frames", {{"first", 15}, {"last", 25}, {"stride", 5}}}};
}

std::string pointer_of(const json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    return what.substr(0, what.find(':'));
  }
  return "";
}

TEST(Config, DefaultsAndRoundTrip) {
  const PipelineConfig c = config_from_json(small_config("MIXED_CITY", "EARLY_LATE"));
  EXPECT_EQ(c.scenario, "MIXED_CITY");
  EXPECT_EQ(c.strategy, Strategy::kEarlyLate);
  EXPECT_EQ(c.past_offsets, 10);
  EXPECT_EQ(c.weights.max_boxes, 300U);
  EXPECT_EQ(config_to_json(config_from_json(config_to_json(c))), config_to_json(c));
}

TEST(Config, ErrorsCarryJsonPointer) {
  json online = small_config("MIXED_CITY", "EARLY");
  online["modar"] = {{"mode", "ONLINE"}, {"past", 10}, {"future", 5}};
  EXPECT_EQ(pointer_of(online), "/modar/future");

  json unknown = small_config("DESERT", "EARLY");
  EXPECT_EQ(pointer_of(unknown), "/scenario/name");

  json typo = small_config("MIXED_CITY", "EARLY");
  typo["fusion"]["stratgy"] = "LATE";
  EXPECT_EQ(pointer_of(typo), "/fusion/stratgy");

  json bad_target = small_config("MIXED_CITY", "EARLY");
  bad_target["target_frames"] = json::array({1, -2});
  EXPECT_EQ(pointer_of(bad_target), "/target_frames/1");

  json bad_j = small_config("MIXED_CITY", "EARLY");
  bad_j["modar"]["J"] = 7;
  EXPECT_EQ(pointer_of(bad_j), "/modar/J");

  json bad_ratio = small_config("MIXED_CITY", "EARLY");
  bad_ratio["tracker"] = {{"partial_ratio", 1.5}};
  EXPECT_EQ(pointer_of(bad_ratio), "/tracker/partial_ratio");

  json negative_seed = small_config("MIXED_CITY", "EARLY");
  negative_seed["scenario"]["seed"] = -1;
  EXPECT_EQ(pointer_of(negative_seed), "/scenario/seed");

  EXPECT_THROW(config_from_json(json::object()), ConfigError);
}

TEST(Config, OnlineDefaultsToNoFuture) {
  json j = small_config("MIXED_CITY", "EARLY");
  j["modar"] = {{"mode", "ONLINE"}, {"past", 80}};
  const PipelineConfig c = config_from_json(j);
  EXPECT_EQ(c.future_offsets, 0);
  EXPECT_TRUE(c.modar_config().future_offsets.empty());
  EXPECT_EQ(c.modar_config().past_offsets.size(), 80U);
}

TEST(Targets, RangeAndList) {
  TargetFrames t;
  t.first = 2;
  t.last = -1;
  t.stride = 3;
  EXPECT_EQ(resolve_targets(t, 10), (std::vector<int>{2, 5, 8}));
  t.frames = {7, 3, 3};
  const auto listed = resolve_targets(t, 10);
  EXPECT_EQ(std::count(listed.begin(), listed.end(), 3), 1);
}

TEST(Pipeline, LidarOnlyWritesNoModarArtifacts) {
  const auto dir = scratch_dir("lidar_only");
  const PipelineConfig c = config_from_json(small_config("STATIONARY_LOT", "LIDAR_ONLY"));
  const auto result = run_pipeline(c, dir);
  EXPECT_TRUE(fs::exists(dir / files::kEval));
  EXPECT_TRUE(fs::exists(dir / files::kDetections));
  EXPECT_FALSE(fs::exists(dir / files::kModarPoints));
  EXPECT_FALSE(fs::exists(dir / files::kForecasts));
  EXPECT_TRUE(result.aph(ObjectClass::kVehicle, eval::Difficulty::kL2));
}

TEST(Pipeline, OnlineProducesForwardPointsOnly) {
  const auto dir = scratch_dir("online");
  json j = small_config("MIXED_CITY", "EARLY");
  j["modar"] = {{"mode", "ONLINE"}, {"past", 20}};
  run_pipeline(config_from_json(j), dir);
  const auto modar = modar_from_jsonl(read_text_file(dir / files::kModarPoints));
  std::size_t count = 0;
  for (const auto& [frame, pts] : modar) {
    for (const auto& p : pts) {
      EXPECT_EQ(p.provenance.direction, points::Direction::kForward);
      ++count;
    }
  }
  EXPECT_GT(count, 0U);
}

TEST(Pipeline, FileStagesMatchInMemoryRun) {
  const auto dir = scratch_dir("stages_vs_memory");
  const PipelineConfig c = config_from_json(small_config("MIXED_CITY", "EARLY_LATE"));
  const auto from_files = run_pipeline(c, dir);

  const SequenceDataset seq = make_sequence(c);
  const DetectionCache cache = detect_all(seq, c);
  const auto manifest = manifest_from_json(json::parse(read_text_file(dir / files::kManifest)));
  const RunOutput mem = run_in_memory(c, seq, cache, manifest);
  EXPECT_EQ(result_to_json(from_files), result_to_json(mem.result));
  EXPECT_EQ(boxes_from_jsonl(read_text_file(dir / files::kBoxes)), mem.boxes);
  EXPECT_EQ(modar_from_jsonl(read_text_file(dir / files::kModarPoints)), mem.modar);
}

TEST(Pipeline, StageErrorsNameTheStage) {
  const auto dir = scratch_dir("missing_dataset");
  json j = small_config("MIXED_CITY", "EARLY");
  j.erase("scenario");
  j["dataset"] = (dir / "nowhere").string();
  try {
    run_pipeline(config_from_json(j), dir);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_NE(std::string(e.what()).find("simulate"), std::string::npos);
  }
}

TEST(Serialization, JsonlRoundTrips) {
  eval::DetectionsByFrame boxes;
  boxes[3] = {testing::make_box(1, 2, 4.0, 2.0, 0.3, ObjectClass::kCyclist, 0.4)};
  boxes[5] = {testing::make_box(-3, 0), testing::make_box(9, 9)};
  EXPECT_EQ(boxes_from_jsonl(boxes_to_jsonl(boxes)), boxes);
}

}  // namespace
}  // namespace modar::pipeline
