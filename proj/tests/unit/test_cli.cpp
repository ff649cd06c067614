#include "modar/dataio.hpp"
#include "modar/pipeline.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

namespace modar {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MODAR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path file = dir / "config.json";
  write_text_file(file, j.dump(2));
  return file;
}

json base_config() {
  return json{{"scenario", {{"name", "STATIONARY_LOT"}, {"seed", 3}, {"frame_count", 20}}},
              {"fusion", {{"strategy", "LIDAR_ONLY"}}},
              {"target_frames", {{"first", 5}, {"last", 15}, {"stride", 5}}}};
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("bogus"), 2);
  EXPECT_EQ(run_cli("simulate"), 2);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST(Cli, InvalidConfigExitsTwo) {
  const auto dir = testing::scratch_dir("cli_bad_config");
  json j = base_config();
  j["modar"] = {{"mode", "ONLINE"}, {"future", 3}};
  const auto cfg = write_config(dir, j);
  EXPECT_EQ(run_cli("pipeline --config " + cfg.string() + " --out " + (dir / "out").string()), 2);
}

TEST(Cli, RuntimeFailureExitsOne) {
  const auto dir = testing::scratch_dir("cli_runtime");
  json j = base_config();
  j.erase("scenario");
  j["dataset"] = (dir / "absent").string();
  const auto cfg = write_config(dir, j);
  EXPECT_EQ(run_cli("detect --config " + cfg.string() + " --out " + (dir / "out").string()), 1);
}

TEST(Cli, SimulateThenDetectWritesCache) {
  const auto dir = testing::scratch_dir("cli_stages");
  const auto cfg = write_config(dir, base_config());
  const auto out = dir / "run";
  ASSERT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + out.string()), 0);
  ASSERT_EQ(run_cli("detect --config " + cfg.string() + " --in " + out.string() + " --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / pipeline::files::kDetections));
}

TEST(Cli, EvalOfEmptyDetectionsGivesZeroAp) {
  const auto dir = testing::scratch_dir("cli_eval_empty");
  const auto cfg = write_config(dir, base_config());
  const auto out = dir / "run";
  ASSERT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + out.string()), 0);
  write_text_file(out / pipeline::files::kBoxes, "");
  ASSERT_EQ(run_cli("eval --config " + cfg.string() + " --out " + out.string()), 0);
  const auto result = eval::result_from_json(json::parse(read_text_file(out / pipeline::files::kEval)));
  EXPECT_EQ(result.ap(ObjectClass::kVehicle, eval::Difficulty::kL2), 0.0);
}

TEST(Cli, PipelineAndReport) {
  const auto dir = testing::scratch_dir("cli_pipeline");
  const auto cfg = write_config(dir, base_config());
  const auto out = dir / "run";
  ASSERT_EQ(run_cli("pipeline --config " + cfg.string() + " --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / pipeline::files::kEval));
  ASSERT_EQ(run_cli("report --in " + out.string() + " --out " + (dir / "report").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "report" / "metrics.csv"));
}

}  // namespace
}  // namespace modar
