#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dpfed/config.hpp"
#include "dpfed/errors.hpp"
#include "dpfed/io.hpp"
#include "dpfed/orchestrator.hpp"
#include "dpfed/version.hpp"

namespace dpfed {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kRuntimeFailure = 3;
}  // namespace exit_code

struct CliOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::vector<std::string> overrides;
};

namespace detail {

inline ExperimentConfig load_experiment(const CliOptions& opts) {
  RawConfig raw = parse_config_file(opts.config_path);
  apply_overrides(raw, opts.overrides);
  ExperimentConfig cfg = resolve_experiment(raw);
  if (opts.seed) cfg.master_seed = *opts.seed;
  if (opts.workers) cfg.workers = *opts.workers;
  return cfg;
}

inline json run_to_summary(const ExperimentConfig& cfg, const ExperimentResult& result,
                           const std::string& csv_path, double wall_seconds) {
  json j;
  j["version"] = kVersion;
  j["seed"] = cfg.master_seed;
  j["algorithm"] = algorithm_name(cfg.algorithm);
  j["config"] = config_to_json(cfg);
  j["rounds_csv"] = csv_path;
  j["final_loss"] = result.final_loss;
  j["last_iterate_loss"] = result.last_iterate_loss;
  if (result.final_dist) j["final_dist_to_optimum"] = *result.final_dist;
  if (result.last_iterate_dist) j["last_iterate_dist_to_optimum"] = *result.last_iterate_dist;
  if (!result.reports.empty()) j["privacy"] = ledger_to_json(result.reports.back().ledger);
  j["wall_time_seconds"] = wall_seconds;
  // selection criterion for sweeps: training loss averaged over the last
  // 5 rounds (post-update running iterate)
  const std::size_t tail = std::min<std::size_t>(5, result.reports.size());
  double tail_loss = 0.0;
  for (std::size_t i = result.reports.size() - tail; i < result.reports.size(); ++i) {
    tail_loss += result.reports[i].train_loss;
  }
  j["tail_mean_loss"] = tail_loss / static_cast<double>(tail);
  return j;
}

/// Executes one experiment into out_dir; returns the summary JSON.
inline json execute_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path csv_path = out_dir / "rounds.csv";
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path.string() + " for writing");
  csv << rounds_csv_header() << '\n';
  const auto started = std::chrono::steady_clock::now();
  const ExperimentResult result =
      run_experiment(cfg, [&](const RoundReport& r) { append_round_csv(csv, r); });
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  csv.close();
  json summary = run_to_summary(cfg, result, csv_path.string(), wall);
  const std::filesystem::path summary_path = out_dir / "summary.json";
  std::ofstream js(summary_path);
  js << summary.dump(2) << '\n';
  summary["summary_path"] = summary_path.string();
  return summary;
}

}  // namespace detail

/// `run` verb: one experiment, per-round CSV + summary JSON. Prints the
/// summary path on stdout; everything else goes to stderr.
inline int cmd_run(const CliOptions& opts) {
  try {
    const ExperimentConfig cfg = detail::load_experiment(opts);
    const json summary = detail::execute_run(cfg, opts.out_dir);
    std::cout << summary.at("summary_path").get<std::string>() << std::endl;
    return exit_code::kOk;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return exit_code::kRuntimeFailure;
  }
}

/// `sweep` verb: cross product of local_lr and clip grids. One manifest per
/// cell plus a leaderboard ranked by training loss averaged over the last 5
/// rounds. Cell failures are recorded and the sweep continues; the exit code
/// is nonzero only when every cell failed.
inline int cmd_sweep(const CliOptions& opts) {
  ExperimentConfig base;
  SweepSpec spec;
  try {
    RawConfig raw = parse_config_file(opts.config_path);
    apply_overrides(raw, opts.overrides);
    base = resolve_experiment(raw);
    spec = resolve_sweep(raw);
    if (opts.seed) base.master_seed = *opts.seed;
    if (opts.workers) base.workers = *opts.workers;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::kConfigError;
  }

  const std::filesystem::path out_dir(opts.out_dir);
  std::filesystem::create_directories(out_dir);
  json board = json::array();
  std::size_t failures = 0;
  for (double lr : spec.local_lr_grid) {
    for (double clip_c : spec.clip_grid) {
      ExperimentConfig cfg = base;
      cfg.local.local_lr = lr;
      cfg.local.clip_threshold = clip_c;
      // noise scales track the clipping threshold unless pinned explicitly
      RawConfig raw = parse_config_file(opts.config_path);
      apply_overrides(raw, opts.overrides);
      if (!raw.has("mechanism.sigma")) {
        if (cfg.mechanism.kind == MechanismKind::kGaussianLocal) {
          cfg.mechanism.sigma = 0.7 * clip_c;
        } else if (cfg.mechanism.kind == MechanismKind::kCentralGaussian) {
          cfg.mechanism.sigma = 5.0 * clip_c / std::sqrt(static_cast<double>(cfg.dataset.clients));
        }
      }
      if (!raw.has("mechanism.sigma_xi") && cfg.mechanism.kind == MechanismKind::kCentralGaussian) {
        const std::size_t model_dim = cfg.dataset.kind == DatasetSpec::Kind::kRegression
                                          ? cfg.dataset.dim
                                          : cfg.dataset.dim * static_cast<std::size_t>(cfg.dataset.classes);
        cfg.mechanism.sigma_xi = static_cast<double>(model_dim) * cfg.mechanism.sigma *
                                 cfg.mechanism.sigma / static_cast<double>(cfg.dataset.clients);
      }
      std::ostringstream cell_name;
      cell_name << "cell_lr" << lr << "_C" << clip_c;
      json entry;
      entry["local_lr"] = lr;
      entry["clip"] = clip_c;
      try {
        const json summary = detail::execute_run(cfg, out_dir / cell_name.str());
        entry["status"] = "ok";
        entry["objective"] = summary.at("tail_mean_loss");
        entry["summary_path"] = summary.at("summary_path");
      } catch (const std::exception& e) {
        entry["status"] = std::string("failed: ") + e.what();
        ++failures;
      }
      board.push_back(std::move(entry));
    }
  }
  std::sort(board.begin(), board.end(), [](const json& a, const json& b) {
    const bool ok_a = a.at("status") == "ok";
    const bool ok_b = b.at("status") == "ok";
    if (ok_a != ok_b) return ok_a;
    if (!ok_a) return false;
    return a.at("objective").get<double>() < b.at("objective").get<double>();
  });
  for (std::size_t i = 0; i < board.size(); ++i) board[i]["rank"] = i + 1;

  const std::filesystem::path board_path = out_dir / "leaderboard.json";
  std::ofstream out(board_path);
  out << board.dump(2) << '\n';
  std::cout << board_path.string() << std::endl;
  if (failures == board.size()) {
    std::cerr << "sweep failed: all " << failures << " cells failed\n";
    return exit_code::kRuntimeFailure;
  }
  return exit_code::kOk;
}

/// `stepsize-study` verb: distribution of the adaptive rules at round 0 over
/// a grid of client counts.
inline int cmd_stepsize_study(const CliOptions& opts) {
  try {
    RawConfig raw = parse_config_file(opts.config_path);
    apply_overrides(raw, opts.overrides);
    ExperimentConfig base = resolve_experiment(raw);
    if (base.dataset.kind != DatasetSpec::Kind::kRegression) {
      throw config_error("stepsize-study requires a regression dataset");
    }
    if (opts.seed) base.master_seed = *opts.seed;
    if (opts.workers) base.workers = *opts.workers;
    const StepSizeStudyConfig study = resolve_study(raw, base);
    const std::vector<StudyCell> table = step_size_study(study);
    std::filesystem::create_directories(opts.out_dir);
    const std::filesystem::path csv_path =
        std::filesystem::path(opts.out_dir) / "stepsize_study.csv";
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot open " + csv_path.string() + " for writing");
    write_study_csv(out, table);
    std::cout << csv_path.string() << std::endl;
    return exit_code::kOk;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return exit_code::kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "stepsize-study failed: " << e.what() << '\n';
    return exit_code::kRuntimeFailure;
  }
}

}  // namespace dpfed
