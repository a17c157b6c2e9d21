#include <CLI11.hpp>

#include "dpfed/cli.hpp"
#include "dpfed/version.hpp"

namespace {

void add_common(CLI::App* cmd, dpfed::CliOptions& opts, std::uint64_t& seed, int& workers) {
  cmd->add_option("--config", opts.config_path, "Experiment config file")->required();
  cmd->add_option("--out-dir", opts.out_dir, "Output directory");
  cmd->add_option("--seed", seed, "Override run.seed");
  cmd->add_option("--workers", workers, "Override run.workers (0 = all cores)");
  cmd->add_option("--override", opts.overrides,
                  "Config override, section.key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentially private federated learning simulator with "
               "adaptive server step sizes"};
  app.set_version_flag("--version", dpfed::kVersion);
  app.require_subcommand(1);

  dpfed::CliOptions run_opts, sweep_opts, study_opts;
  std::uint64_t run_seed = 0, sweep_seed = 0, study_seed = 0;
  int run_workers = -1, sweep_workers = -1, study_workers = -1;

  CLI::App* run = app.add_subcommand("run", "Run one experiment");
  add_common(run, run_opts, run_seed, run_workers);
  CLI::App* sweep = app.add_subcommand("sweep", "Grid-search local_lr and clip");
  add_common(sweep, sweep_opts, sweep_seed, sweep_workers);
  CLI::App* study = app.add_subcommand("stepsize-study",
                                       "Step-size distributions at initialization");
  add_common(study, study_opts, study_seed, study_workers);

  CLI11_PARSE(app, argc, argv);

  const auto finalize = [](dpfed::CliOptions& opts, const CLI::App* cmd,
                           std::uint64_t seed, int workers) {
    if (cmd->count("--seed") > 0) opts.seed = seed;
    if (cmd->count("--workers") > 0) opts.workers = workers;
  };

  if (run->parsed()) {
    finalize(run_opts, run, run_seed, run_workers);
    return dpfed::cmd_run(run_opts);
  }
  if (sweep->parsed()) {
    finalize(sweep_opts, sweep, sweep_seed, sweep_workers);
    return dpfed::cmd_sweep(sweep_opts);
  }
  finalize(study_opts, study, study_seed, study_workers);
  return dpfed::cmd_stepsize_study(study_opts);
}
