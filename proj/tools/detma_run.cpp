#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "detma/detma.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Leader-following consensus under event-triggered communication"};
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  bool quiet = false;
  bool strict = false;
  app.add_option("config", config_path, "YAML configuration file")->required();
  app.add_option("--out-dir", out_dir, "Directory for output files");
  app.add_option("--seed", seed, "Override sim.seed");
  app.add_option("--mode", mode, "Override trigger_mode (detm-ma, detm-fixed, setm)");
  app.add_flag("--quiet", quiet, "Suppress progress output");
  app.add_flag("--strict", strict, "Exit with status 3 when a property verdict fails");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? detma::kExitOk : detma::kExitConfig;
  }

  detma::SimConfig config;
  try {
    config = detma::parse_config(config_path);
    if (seed) config.sim.seed = *seed;
    if (mode) config.trigger_mode = detma::parse_trigger_mode(*mode);
    (void)detma::make_scenario(config);
  } catch (const std::exception& e) {
    std::cerr << config_path << ": " << e.what() << "\n";
    return detma::kExitConfig;
  }

  detma::RunOptions opts;
  opts.out_dir = out_dir;
  opts.quiet = quiet;
  opts.strict = strict;
  try {
    if (config.sweep) return detma::run_sweep(config, opts).exit_code;
    return detma::run_single(config, opts).exit_code;
  } catch (const std::exception& e) {
    std::cerr << "simulation failed: " << e.what() << "\n";
    return detma::kExitSimulation;
  }
}
