// Command-line front end: Monte-Carlo RMSE sweeps, approximation-error
// sweeps, and single-trial inspection.

#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rbl/harness.hpp"

namespace {

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rigid-body localization experiments"};
  app.require_subcommand(1);

  auto* rmse_cmd =
      app.add_subcommand("rmse", "Monte-Carlo RMSE sweep over noise levels");
  std::string rmse_config, rmse_out = "rmse.csv";
  bool full = false;
  std::uint64_t rmse_seed = 0;
  bool rmse_seed_set = false;
  rmse_cmd->add_option("--config", rmse_config, "experiment configuration")
      ->required();
  rmse_cmd->add_flag("--full", full, "run the full 10^4-trial protocol");
  rmse_cmd->add_option("--seed", rmse_seed, "override the configured seed")
      ->each([&](const std::string&) { rmse_seed_set = true; });
  rmse_cmd->add_option("--out", rmse_out, "output CSV path");

  auto* sweep_cmd = app.add_subcommand(
      "approx-sweep", "sine/cosine approximation errors over [-pi/4, pi/4]");
  int points = 1001;
  std::string sweep_out = "approx_sweep.csv";
  sweep_cmd->add_option("--points", points, "grid size");
  sweep_cmd->add_option("--out", sweep_out, "output CSV path");

  auto* single_cmd =
      app.add_subcommand("single", "one trial, true vs estimated pose");
  std::string single_config;
  double single_sigma = 0;
  std::uint64_t single_seed = 0;
  single_cmd->add_option("--config", single_config, "experiment configuration")
      ->required();
  single_cmd->add_option("--sigma", single_sigma, "range noise std, meters")
      ->required();
  single_cmd->add_option("--seed", single_seed, "trial seed")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (rmse_cmd->parsed()) {
      auto cfg = rbl::harness::parse_config(rmse_config);
      if (full) cfg.trials = 10000;
      if (rmse_seed_set) cfg.seed = rmse_seed;
      const auto rows = rbl::harness::run_rmse_experiment(cfg);
      auto out = open_output(rmse_out);
      rbl::harness::write_rmse_csv(rows, out);
      std::cerr << "wrote " << rows.size() << " rows to " << rmse_out << "\n";
    } else if (sweep_cmd->parsed()) {
      auto out = open_output(sweep_out);
      const auto res = rbl::harness::run_approx_sweep(points, &out);
      std::cerr << "max errors: sin small " << res.max_err_sin_small
                << ", sin quad " << res.max_err_sin_quad << ", cos small "
                << res.max_err_cos_small << ", cos quad "
                << res.max_err_cos_quad << "\n";
    } else if (single_cmd->parsed()) {
      const auto cfg = rbl::harness::parse_config(single_config);
      rbl::harness::run_single(cfg, single_sigma, single_seed, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
