// Command-line entry point: one subcommand per pipeline stage plus `pipeline`.
#include "modar/errors.hpp"
#include "modar/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
namespace mp = modar::pipeline;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string in;
  std::vector<std::string> runs;
  std::optional<std::uint64_t> seed;
};

mp::PipelineConfig resolve(const Options& opt, fs::path& dir) {
  mp::PipelineConfig config = mp::load_config(opt.config);
  if (opt.seed) config.seed = *opt.seed;
  if (!opt.out.empty()) config.output_dir = opt.out;
  if (config.output_dir.empty()) throw modar::ConfigError("/output_dir: no output directory given");
  dir = config.output_dir;
  fs::create_directories(dir);
  // Stages run in place; artifacts from another directory are copied in first.
  if (!opt.in.empty() && fs::weakly_canonical(opt.in) != fs::weakly_canonical(dir)) {
    fs::copy(opt.in, dir, fs::copy_options::recursive | fs::copy_options::skip_existing);
  }
  return config;
}

void print_summary(const modar::eval::EvalResult& r) {
  std::cout << "mAPH(L2) ";
  if (r.mean_aph_l2) {
    std::cout << *r.mean_aph_l2 << '\n';
  } else {
    std::cout << "absent\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MoDAR desk-scale pipeline"};
  app.require_subcommand(1);
  Options opt;

  const std::vector<std::string> stage_names{"simulate", "detect", "track", "forecast", "modar",
                                             "fuse",     "eval",   "pipeline"};
  std::vector<CLI::App*> stages;
  for (const auto& name : stage_names) {
    CLI::App* sub = app.add_subcommand(name, "run the " + name + " stage");
    sub->add_option("--config", opt.config, "pipeline config (JSON)")->required();
    sub->add_option("--out", opt.out, "output directory (overrides output_dir)");
    sub->add_option("--in", opt.in, "directory holding the stage inputs");
    sub->add_option("--seed", opt.seed, "seed (overrides scenario.seed)");
    stages.push_back(sub);
  }
  CLI::App* report = app.add_subcommand("report", "write CSV and SVG reports from eval runs");
  report->add_option("--in", opt.runs, "run directories (eval.json, config.json)")->required();
  report->add_option("--out", opt.out, "report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (report->parsed()) {
      std::vector<fs::path> runs(opt.runs.begin(), opt.runs.end());
      mp::stage_report(runs, opt.out);
      return 0;
    }
    fs::path dir;
    const mp::PipelineConfig config = resolve(opt, dir);
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "simulate") {
      mp::stage_simulate(config, dir);
    } else if (name == "detect") {
      mp::stage_detect(config, dir);
    } else if (name == "track") {
      mp::stage_track(config, dir);
    } else if (name == "forecast") {
      mp::stage_forecast(config, dir);
    } else if (name == "modar") {
      mp::stage_modar(config, dir);
    } else if (name == "fuse") {
      mp::stage_fuse(config, dir);
    } else if (name == "eval") {
      print_summary(mp::stage_eval(config, dir));
    } else {
      print_summary(mp::run_pipeline(config, dir));
    }
    return 0;
  } catch (const modar::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
