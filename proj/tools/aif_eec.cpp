// aif-eec <mode> --config <path> [--seed N] [--out DIR] [key=value ...]
//
// Modes: calibrate, train, evaluate, baseline, sweep, plot, rerun.
// AIF_EEC_LOG selects the log level (trace, debug, info, warn, error, off).

#include "aif/harness/run.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

namespace {

void configure_logging() {
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");
  if (const char* level = std::getenv("AIF_EEC_LOG")) spdlog::set_level(spdlog::level::from_str(level));
}

int run_cli(int argc, char** argv) {
  using namespace aif::harness;
  CLI::App app{"Active-inference energy-efficient control of a manufacturing workstation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::vector<CLI::App*> experiment_modes;
  for (const auto& name : mode_names()) {
    auto* sub = app.add_subcommand(name, "run the " + name + " mode");
    sub->add_option("--config", config_path, "experiment configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override run.seed");
    sub->add_option("--out", out_dir, "override run.out");
    sub->add_option("overrides", overrides, "section.key=value overrides");
    experiment_modes.push_back(sub);
  }

  std::string csv_path;
  std::string plot_out = ".";
  auto* plot_cmd = app.add_subcommand("plot", "render SVG figures from a result CSV");
  plot_cmd->add_option("--input", csv_path, "CSV written by train, evaluate, baseline or sweep")->required();
  plot_cmd->add_option("--out", plot_out, "directory for the SVG files");

  std::string manifest_path;
  std::string rerun_out;
  auto* rerun_cmd = app.add_subcommand("rerun", "re-execute a run manifest and compare output digests");
  rerun_cmd->add_option("--manifest", manifest_path, "manifest.json of an earlier run")->required()->check(CLI::ExistingFile);
  rerun_cmd->add_option("--out", rerun_out, "output directory for the re-run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInvalidConfig;
  }

  const Logger log = [](const std::string& msg) { spdlog::info(msg); };

  if (plot_cmd->parsed()) {
    for (const auto& f : plot(csv_path, plot_out)) spdlog::info("wrote {}", f);
    return kOk;
  }
  if (rerun_cmd->parsed()) {
    const auto check = rerun(manifest_path, rerun_out, log);
    if (!check.mismatched.empty()) {
      for (const auto& f : check.mismatched) spdlog::error("output differs from manifest: {}", f);
      return kReproductionMismatch;
    }
    spdlog::info("all {} outputs match the manifest", check.report.manifest.outputs.size());
    return kOk;
  }
  for (auto* sub : experiment_modes) {
    if (!sub->parsed()) continue;
    std::vector<std::string> all = overrides;
    if (seed) all.push_back("run.seed=" + std::to_string(*seed));
    if (!out_dir.empty()) all.push_back("run.out=" + out_dir);
    const auto config = ExperimentConfig::load(config_path, all);
    const auto report = run(sub->get_name(), config, log);
    spdlog::info("wrote {} outputs to {}", report.manifest.outputs.size(), report.out_dir);
    return kOk;
  }
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  try {
    return run_cli(argc, argv);
  } catch (const aif::harness::HarnessError& e) {
    spdlog::error("{}", e.what());
    return e.code();
  } catch (const aif::ConfigError& e) {
    spdlog::error("invalid configuration: {}", e.what());
    return aif::harness::kInvalidConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return aif::harness::kFailure;
  }
}
