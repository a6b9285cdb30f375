// Command-line front end: estimates group proportions from capped response
// effort data, sweeps simulation scenarios, bootstraps estimator error, and
// dumps observation kernels.  Exit codes: 0 success, 1 estimation/runtime
// failure, 2 usage/config/data error.
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "deconvht/cli.hpp"

namespace {

void add_common_options(CLI::App* cmd, deconvht::CliOptions& opts, bool with_data) {
  cmd->add_option("--config", opts.config_path, "run configuration file")->required();
  if (with_data) cmd->add_option("--data", opts.data_path, "observation CSV")->required();
  cmd->add_option("--out", opts.out_path, "output path (overrides [output] path)");
  cmd->add_option("--format", opts.format, "output format: csv or text")
      ->check(CLI::IsMember({"csv", "text"}));
  cmd->add_option("--seed", opts.seed, "seed override");
  cmd->add_option("--reps", opts.reps, "replication-count override");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Response-effort deconvolution and corrected proportion estimation"};
  app.require_subcommand(1);

  deconvht::CliOptions opts;
  CLI::App* sim = app.add_subcommand("simulate", "run the configured scenario sweep");
  add_common_options(sim, opts, false);
  CLI::App* est = app.add_subcommand("estimate", "estimate group proportions from data");
  add_common_options(est, opts, true);
  CLI::App* boot = app.add_subcommand("bootstrap", "bootstrap the corrected totals' error");
  add_common_options(boot, opts, true);
  CLI::App* kern = app.add_subcommand("kernel", "dump the observation kernel matrix");
  add_common_options(kern, opts, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return 2;
  }

  try {
    if (sim->parsed()) return deconvht::cmd_simulate(opts);
    if (est->parsed()) return deconvht::cmd_estimate(opts);
    if (boot->parsed()) return deconvht::cmd_bootstrap(opts);
    return deconvht::cmd_kernel(opts);
  } catch (const deconvht::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const deconvht::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
