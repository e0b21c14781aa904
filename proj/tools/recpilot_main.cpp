// recpilot <stage> --config run.json [--set key.path=value ...] [--run-dir DIR] [--jobs N]

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <thread>

#include "recpilot/config.hpp"
#include "recpilot/pipeline.hpp"

namespace {

using namespace recpilot;

const std::map<std::string, std::function<std::string(const pipeline::Run&)>>& stages() {
  static const std::map<std::string, std::function<std::string(const pipeline::Run&)>> table = {
      {"ingest", pipeline::run_ingest},     {"train-sl", pipeline::run_train_sl},
      {"train-rl", pipeline::run_train_rl}, {"simulate", pipeline::run_simulate},
      {"report", pipeline::run_report},     {"evolve", pipeline::run_evolve},
      {"eval", pipeline::run_eval},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory simulation and report-agent recommendation pipeline"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_dir;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string log_level = "warn";

  for (const auto& [name, fn] : stages()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "JSON run configuration")->required();
    sub->add_option("--set", overrides, "dotted-path override, e.g. sampler.p=0.95");
    sub->add_option("--run-dir", run_dir, "run directory (default: a new timestamped one)");
    sub->add_option("-j,--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber);
    sub->add_option("--log-level", log_level, "trace|debug|info|warn|error");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string stage = app.get_subcommands().front()->get_name();
  spdlog::set_default_logger(spdlog::stderr_color_mt("recpilot"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  pipeline::Run run;
  try {
    run.config = config::load_config(config_path, overrides);
  } catch (const config::ConfigError& e) {
    std::cerr << stage << ": config error: " << e.what() << "\n";
    return 2;
  }
  run.jobs = jobs;
  try {
    const bool fresh = run_dir.empty();
    run.dir = fresh ? pipeline::default_run_dir(run.config) : run_dir;
    if (fresh || !std::filesystem::exists(std::filesystem::path(run.dir) / "config.json")) {
      pipeline::prepare_run_dir(run);
    }
    if (fresh) std::cout << "run directory: " << run.dir << "\n";
    const auto summary = stages().at(stage)(run);
    std::cout << stage << ": " << summary << "\n";
  } catch (const config::ConfigError& e) {
    std::cerr << stage << ": config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << stage << ": error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
