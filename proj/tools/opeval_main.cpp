#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "opeval/experiment.hpp"
#include "opeval/mdp.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Offline policy evaluation lab: linear estimators, shift diagnostics, and "
               "dataset-mixing experiments on tabular MDPs"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  bool fast = false;

  const std::vector<std::pair<std::string, std::string>> modes = {
      {"simulate", "Gaussian feature-pair simulation of error amplification"},
      {"evaluate", "FQI on target-policy data mixed with random data"},
      {"diagnose", "shift constants, completeness residual, amplification spectrum"},
      {"sweep", "regularization sweep on a single dataset"},
      {"compare", "policy comparison against lower-performance policies"},
  };
  for (const auto& [name, desc] : modes) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override the master seed");
    sub->add_flag("--fast", fast, "reduced repetitions / dataset size for smoke runs");
  }

  CLI11_PARSE(app, argc, argv);

  const std::string mode_name = app.get_subcommands().front()->get_name();
  opeval::RunOptions options;
  options.config_path = config_path;
  options.out_dir = out_dir;
  options.seed_override = seed;
  options.fast = fast;

  try {
    opeval::run_experiment(opeval::parse_mode(mode_name), options);
  } catch (const opeval::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const opeval::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
