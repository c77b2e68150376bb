#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "taper_mle/cli.hpp"

namespace cli = taper_mle::cli;

int main(int argc, char** argv) {
  CLI::App app{"Exact and covariance-tapered maximum likelihood for Gaussian processes on [0, 1]"};
  app.require_subcommand(1);

  std::string config;
  std::string data;
  unsigned threads = 0;

  auto* simulate = app.add_subcommand("simulate", "simulate a dataset and write it as t,x CSV");
  simulate->add_option("-c,--config", config, "JSON config file")->required();

  auto* fit = app.add_subcommand("fit", "fit a dataset and print the estimate as JSON");
  fit->add_option("-c,--config", config, "JSON config file")->required();
  fit->add_option("-d,--data", data, "t,x CSV dataset")->required();

  auto* mc = app.add_subcommand("mc", "Monte Carlo study of the microergodic estimators");
  mc->add_option("-c,--config", config, "JSON config file")->required();
  mc->add_option("-t,--threads", threads, "worker threads (default: all cores; TAPER_MLE_THREADS overrides)");

  auto* diag = app.add_subcommand("diag", "taper and likelihood diagnostics");
  diag->add_option("-c,--config", config, "JSON config file")->required();

  auto* bench = app.add_subcommand("bench", "time dense against banded tapered likelihood evaluation");
  bench->add_option("-c,--config", config, "JSON config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitConfig;
  }

  try {
    const auto cfg = cli::Config::from_file(config);
    if (*simulate) return cli::cmd_simulate(cfg);
    if (*fit) return cli::cmd_fit(data, cfg);
    if (*mc) return cli::cmd_mc(cfg, threads);
    if (*diag) return cli::cmd_diag(cfg);
    if (*bench) return cli::cmd_bench(cfg);
  } catch (const std::exception& e) {
    return cli::exit_code_for(e, std::cerr);
  }
  return cli::kExitConfig;
}
