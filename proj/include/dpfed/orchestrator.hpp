#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dpfed/accountant.hpp"
#include "dpfed/client.hpp"
#include "dpfed/data.hpp"
#include "dpfed/errors.hpp"
#include "dpfed/mechanisms.hpp"
#include "dpfed/rng.hpp"
#include "dpfed/server.hpp"
#include "dpfed/vec.hpp"

namespace dpfed {

enum class Algorithm {
  kDpFedavg,            // clean updates, eta_g = 1
  kFedexpClean,         // clean updates, adaptive ratio
  kLdpFedavgGaussian,   // local Gaussian noise, eta_g = 1
  kLdpFedexpGaussian,   // local Gaussian noise, bias-corrected ratio
  kLdpFedavgPrivunit,   // unit-vector randomizer, eta_g = 1
  kLdpFedexpPrivunit,   // unit-vector randomizer, estimated-norm ratio
  kCdpFedavg,           // central noise, eta_g = 1
  kCdpFedexp,           // central noise, noisy clean-numerator ratio
};

enum class MechanismKind { kNone, kGaussianLocal, kPrivunit, kCentralGaussian };

inline MechanismKind mechanism_for(Algorithm a) {
  switch (a) {
    case Algorithm::kDpFedavg:
    case Algorithm::kFedexpClean:
      return MechanismKind::kNone;
    case Algorithm::kLdpFedavgGaussian:
    case Algorithm::kLdpFedexpGaussian:
      return MechanismKind::kGaussianLocal;
    case Algorithm::kLdpFedavgPrivunit:
    case Algorithm::kLdpFedexpPrivunit:
      return MechanismKind::kPrivunit;
    case Algorithm::kCdpFedavg:
    case Algorithm::kCdpFedexp:
      return MechanismKind::kCentralGaussian;
  }
  throw std::invalid_argument("unknown algorithm");
}

inline StepSizeRule default_rule_for(Algorithm a) {
  StepSizeRule r;
  switch (a) {
    case Algorithm::kDpFedavg:
    case Algorithm::kLdpFedavgGaussian:
    case Algorithm::kLdpFedavgPrivunit:
    case Algorithm::kCdpFedavg:
      r.variant = StepVariant::kFixed;
      r.fixed_eta = 1.0;
      break;
    case Algorithm::kFedexpClean:
      r.variant = StepVariant::kFedexpClean;
      break;
    case Algorithm::kLdpFedexpGaussian:
      r.variant = StepVariant::kLdpGaussianCorrected;
      break;
    case Algorithm::kLdpFedexpPrivunit:
      r.variant = StepVariant::kLdpPrivunit;
      break;
    case Algorithm::kCdpFedexp:
      r.variant = StepVariant::kCdpCorrected;
      break;
  }
  return r;
}

struct MechanismSettings {
  MechanismKind kind = MechanismKind::kNone;
  double sigma = 0.0;     // local noise std (LDP) or aggregate scale (CDP)
  double sigma_xi = 0.0;  // CDP scalar-numerator noise std
  double eps0 = 2.0, eps1 = 2.0, eps2 = 2.0;
};

struct DatasetSpec {
  enum class Kind { kRegression, kClassification };
  Kind kind = Kind::kRegression;
  std::size_t dim = 100;
  std::size_t clients = 1000;
  int classes = 10;
  int samples_per_client = 5;
  double dirichlet_alpha = 0.3;
};

inline FederatedDataset generate_dataset(const DatasetSpec& spec, RngStream rng) {
  if (spec.kind == DatasetSpec::Kind::kRegression) {
    return generate_synthetic_regression(spec.clients, spec.dim, rng);
  }
  return generate_synthetic_classification(spec.clients, spec.dim, spec.classes,
                                           spec.samples_per_client,
                                           spec.dirichlet_alpha, rng);
}

struct ExperimentConfig {
  DatasetSpec dataset;
  Algorithm algorithm = Algorithm::kDpFedavg;
  LocalTrainConfig local;
  MechanismSettings mechanism;
  StepSizeRule rule;  // resolved; defaults follow the algorithm
  int rounds = 50;
  std::uint64_t master_seed = 1;
  int last_k_average = 2;
  bool record_eta_target = true;
  double delta = 1e-5;
  int workers = 0;  // 0 = hardware concurrency
};

struct RoundReport {
  int round = 0;  // 1-based
  double eta_g = 1.0;
  std::optional<double> eta_target;
  double c_bar_norm = 0.0;
  double train_loss = 0.0;
  std::optional<double> dist_to_optimum;
  PrivacyLedger ledger;
};

struct ExperimentResult {
  Vec final_model;  // average of the last k iterates
  Vec last_iterate;
  std::vector<RoundReport> reports;
  double final_loss = 0.0;
  double last_iterate_loss = 0.0;
  std::optional<double> final_dist;
  std::optional<double> last_iterate_dist;
};

namespace detail {

/// Index-sharded parallel map. Results are written into caller-owned slots,
/// so output is identical for any worker count, including 1.
inline void parallel_for(std::size_t n, int workers,
                         const std::function<void(std::size_t)>& fn) {
  unsigned int nw = workers > 0 ? static_cast<unsigned int>(workers)
                                : std::max(1u, std::thread::hardware_concurrency());
  nw = std::min<unsigned int>(nw, n == 0 ? 1 : static_cast<unsigned int>(std::min<std::size_t>(n, 64)));
  if (nw <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(nw);
  for (unsigned int t = 0; t < nw; ++t) {
    pool.emplace_back([&, t]() {
      const std::size_t lo = n * t / nw;
      const std::size_t hi = n * (t + 1) / nw;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct PrivacyRates {
  PrivacyRegime regime = PrivacyRegime::kNone;
  double rho = 0.0;
  double rho_xi = 0.0;
  double pure_eps = 0.0;
};

inline PrivacyRates privacy_rates_for(const ExperimentConfig& cfg) {
  PrivacyRates rates;
  const double c = cfg.local.clip_threshold;
  switch (mechanism_for(cfg.algorithm)) {
    case MechanismKind::kNone:
      rates.regime = PrivacyRegime::kNone;
      break;
    case MechanismKind::kGaussianLocal:
      rates.regime = PrivacyRegime::kLdpGaussian;
      rates.rho = ldp_gaussian_rho(c, cfg.mechanism.sigma);
      break;
    case MechanismKind::kPrivunit:
      rates.regime = PrivacyRegime::kLdpPrivunit;
      rates.pure_eps = privunit_pure_eps(cfg.mechanism.eps0, cfg.mechanism.eps1,
                                         cfg.mechanism.eps2);
      break;
    case MechanismKind::kCentralGaussian: {
      rates.regime = PrivacyRegime::kCdp;
      const bool uses_xi = cfg.rule.variant == StepVariant::kCdpCorrected;
      const auto [rho, rho_xi] =
          cdp_rho(c, cfg.mechanism.sigma, uses_xi ? cfg.mechanism.sigma_xi : 1.0,
                  cfg.dataset.clients, 1);
      rates.rho = rho;
      rates.rho_xi = uses_xi ? rho_xi : 0.0;
      break;
    }
  }
  return rates;
}

inline PrivacyLedger ledger_after(const PrivacyRates& rates, int rounds, double delta) {
  PrivacyLedger ledger;
  ledger.regime = rates.regime;
  ledger.rho = rates.rho;
  ledger.rho_xi = rates.rho_xi;
  ledger.pure_eps = rates.pure_eps;
  ledger.rounds_composed = rounds;
  ledger.delta = delta;
  return ledger;
}

}  // namespace detail

/// One engine drives every algorithm; the mechanism decides what the server
/// receives and the rule decides the step size. Local randomizers draw from
/// per-(round, client) streams and the server from a per-round stream, so
/// trajectories are invariant to client execution order.
class TrainingEngine {
 public:
  TrainingEngine(const ExperimentConfig& config, const FederatedDataset& data)
      : cfg_(config), data_(data), root_(config.master_seed) {
    validate(cfg_.local);
    if (cfg_.rounds < 1) throw config_error("run.rounds must be >= 1");
    if (cfg_.last_k_average < 1) throw config_error("run.last_k_average must be >= 1");
    if (data_.clients.empty()) throw config_error("dataset has no clients");
    const MechanismKind kind = mechanism_for(cfg_.algorithm);
    if (kind == MechanismKind::kGaussianLocal && !(cfg_.mechanism.sigma > 0.0)) {
      throw config_error("mechanism.sigma must be > 0 for the Gaussian randomizer");
    }
    if (kind == MechanismKind::kCentralGaussian) {
      if (!(cfg_.mechanism.sigma > 0.0)) throw config_error("mechanism.sigma must be > 0");
      if (cfg_.rule.variant == StepVariant::kCdpCorrected && !(cfg_.mechanism.sigma_xi > 0.0)) {
        throw config_error("mechanism.sigma_xi must be > 0 for the corrected central rule");
      }
    }
    if (kind == MechanismKind::kPrivunit) {
      privunit_cfg_ = make_privunit_config(data_.model_dim(), cfg_.mechanism.eps0,
                                           cfg_.mechanism.eps1, cfg_.mechanism.eps2,
                                           cfg_.local.clip_threshold);
    }
    if (cfg_.rule.variant == StepVariant::kLdpPrivunit && kind != MechanismKind::kPrivunit) {
      throw config_error("estimated-norm rule requires the unit-vector randomizer");
    }
    if (cfg_.rule.variant == StepVariant::kLdpGaussianCorrected &&
        kind != MechanismKind::kGaussianLocal) {
      throw config_error("bias-corrected rule requires the local Gaussian randomizer");
    }
    if (cfg_.rule.variant == StepVariant::kCdpCorrected && kind != MechanismKind::kCentralGaussian) {
      throw config_error("central corrected rule requires central noise");
    }
    // A local randomizer hides clean norms from the server; rules that read
    // them are only valid where the server legitimately has them.
    const bool clean_visible =
        kind == MechanismKind::kNone || kind == MechanismKind::kCentralGaussian;
    if (cfg_.rule.variant == StepVariant::kFedexpClean && !clean_visible) {
      throw config_error("clean extrapolation rule cannot run behind a local randomizer");
    }
    if (cfg_.rule.variant == StepVariant::kNaiveNoisy && kind == MechanismKind::kCentralGaussian) {
      throw config_error("noisy-ratio rule is a local-randomizer rule");
    }
    rates_ = detail::privacy_rates_for(cfg_);
  }

  /// Runs rounds 1..T from w = 0 and returns the averaged final model plus
  /// the full report stream.
  ExperimentResult run(const std::function<void(const RoundReport&)>& on_round = {}) {
    const std::size_t dim = data_.model_dim();
    Vec w(dim, 0.0);
    std::vector<Vec> iterates;
    iterates.reserve(cfg_.rounds);
    ExperimentResult result;
    result.reports.reserve(cfg_.rounds);
    for (int t = 1; t <= cfg_.rounds; ++t) {
      RoundReport report = run_round(t, w);
      iterates.push_back(w);
      if (on_round) on_round(report);
      result.reports.push_back(std::move(report));
    }
    result.last_iterate = w;
    const std::size_t k =
        std::min<std::size_t>(static_cast<std::size_t>(cfg_.last_k_average), iterates.size());
    result.final_model = average_last_k(iterates, k);
    result.last_iterate_loss = mean_loss(result.last_iterate);
    result.final_loss = mean_loss(result.final_model);
    if (data_.optimum && data_.optimum->size() == dim) {
      result.last_iterate_dist = l2_norm(sub(result.last_iterate, *data_.optimum));
      result.final_dist = l2_norm(sub(result.final_model, *data_.optimum));
    }
    return result;
  }

  /// Advances w by one round (1-based index t) and reports on it.
  RoundReport run_round(int t, Vec& w) {
    const MechanismKind kind = mechanism_for(cfg_.algorithm);
    const std::size_t m = data_.clients.size();
    const std::size_t dim = w.size();
    const RngStream round_clients = root_.child(stream_tag::kClient, static_cast<std::uint64_t>(t));
    RngStream server_rng = root_.child(stream_tag::kServer, static_cast<std::uint64_t>(t));

    std::vector<Vec> released(m);
    std::vector<double> clean_sq(m), noisy_sq(m), s_hat(m, 0.0);
    detail::parallel_for(m, cfg_.workers, [&](std::size_t i) {
      RngStream rng = round_clients.child(i);
      Vec delta = clip(local_update(w, data_.clients[i], cfg_.local, i), cfg_.local.clip_threshold);
      clean_sq[i] = l2_norm_sq(delta);
      switch (kind) {
        case MechanismKind::kNone:
        case MechanismKind::kCentralGaussian:
          released[i] = std::move(delta);
          break;
        case MechanismKind::kGaussianLocal:
          released[i] = gaussian_local_randomize(delta, {cfg_.mechanism.sigma}, rng);
          break;
        case MechanismKind::kPrivunit:
          released[i] = privunit_randomize(delta, privunit_cfg_, rng);
          s_hat[i] = estimate_norm_squared(released[i], privunit_cfg_);
          break;
      }
      noisy_sq[i] = l2_norm_sq(released[i]);
    });

    AggregateResult agg;
    agg.c_bar = aggregate_mean(released);
    agg.sum_sq_clean = mean_of(clean_sq);

    StepSizeInputs in;
    in.c_bar_norm_sq = l2_norm_sq(agg.c_bar);
    in.dim = dim;
    in.sigma = cfg_.mechanism.sigma;
    if (kind == MechanismKind::kCentralGaussian) {
      const CdpNoiseConfig noise_cfg{cfg_.mechanism.sigma, cfg_.mechanism.sigma_xi};
      add_scaled(agg.c_bar, 1.0, central_gaussian_noise(dim, noise_cfg, m, server_rng));
      in.c_bar_norm_sq = l2_norm_sq(agg.c_bar);
      double xi = 0.0;
      if (cfg_.rule.variant == StepVariant::kCdpCorrected) {
        xi = cfg_.mechanism.sigma_xi * server_rng.normal();
      }
      in.clean_sq_mean_plus_xi = agg.sum_sq_clean + xi;
    } else {
      in.noisy_sq_mean = mean_of(noisy_sq);
      in.privunit_s_mean = kind == MechanismKind::kPrivunit ? mean_of(s_hat)
                                                            : std::numeric_limits<double>::quiet_NaN();
      if (kind == MechanismKind::kNone) {
        in.clean_sq_mean_plus_xi = agg.sum_sq_clean;  // clean modes only
      }
    }

    switch (cfg_.rule.variant) {
      case StepVariant::kFixed:
        agg.sum_sq_estimated = agg.sum_sq_clean;
        break;
      case StepVariant::kFedexpClean:
      case StepVariant::kCdpCorrected:
        agg.sum_sq_estimated = in.clean_sq_mean_plus_xi;
        break;
      case StepVariant::kNaiveNoisy:
        agg.sum_sq_estimated = in.noisy_sq_mean;
        break;
      case StepVariant::kLdpGaussianCorrected:
        agg.sum_sq_estimated = in.noisy_sq_mean - static_cast<double>(dim) * in.sigma * in.sigma;
        break;
      case StepVariant::kLdpPrivunit:
        agg.sum_sq_estimated = in.privunit_s_mean;
        break;
    }

    try {
      agg.eta_g = step_size(cfg_.rule, in);
    } catch (const degenerate_round_error&) {
      std::cerr << "warning: round " << t << ": aggregated update has zero norm; using eta_g = 1\n";
      agg.eta_g = 1.0;
    }
    if (cfg_.record_eta_target && in.c_bar_norm_sq > 0.0) {
      agg.eta_target = agg.sum_sq_clean / in.c_bar_norm_sq;
    }

    w = apply_global_update(w, agg.c_bar, agg.eta_g);
    if (!all_finite(w)) {
      throw divergence_error("global model diverged at round " + std::to_string(t));
    }

    RoundReport report;
    report.round = t;
    report.eta_g = agg.eta_g;
    if (cfg_.record_eta_target && !std::isnan(agg.eta_target)) report.eta_target = agg.eta_target;
    report.c_bar_norm = std::sqrt(in.c_bar_norm_sq);
    report.train_loss = mean_loss(w);
    if (data_.optimum && data_.optimum->size() == dim) {
      report.dist_to_optimum = l2_norm(sub(w, *data_.optimum));
    }
    report.ledger = detail::ledger_after(rates_, t, cfg_.delta);
    return report;
  }

  double mean_loss(const Vec& w) const {
    const std::size_t m = data_.clients.size();
    std::vector<double> losses(m);
    detail::parallel_for(m, cfg_.workers,
                         [&](std::size_t i) { losses[i] = loss(data_.clients[i], w); });
    double s = 0.0;
    for (double v : losses) s += v;
    return s / static_cast<double>(m);
  }

 private:
  static double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double v : xs) s += v;
    return s / static_cast<double>(xs.size());
  }

  ExperimentConfig cfg_;
  const FederatedDataset& data_;
  RngStream root_;
  detail::PrivacyRates rates_;
  PrivUnitConfig privunit_cfg_;
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const FederatedDataset& data,
                                       const std::function<void(const RoundReport&)>& on_round = {}) {
  TrainingEngine engine(cfg, data);
  return engine.run(on_round);
}

/// Convenience overload: the dataset is derived from the master seed, so a
/// (config, seed) pair pins the entire run.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::function<void(const RoundReport&)>& on_round = {}) {
  RngStream root(cfg.master_seed);
  RngStream data_rng = root.child(stream_tag::kData, 0);
  const FederatedDataset data = generate_dataset(cfg.dataset, data_rng);
  return run_experiment(cfg, data, on_round);
}

// ---------------------------------------------------------------------------
// Step-size study: distribution of the rules at initialization (round 0).

struct StepSizeStudyConfig {
  std::vector<std::size_t> client_grid = {10, 100, 1000};
  int repeats = 50;
  std::size_t dim = 100;
  LocalTrainConfig local;
  double sigma = 0.0;  // local Gaussian noise; default 0.7 * clip
  double eps0 = 2.0, eps1 = 2.0, eps2 = 2.0;
  std::uint64_t master_seed = 1;
  double epsilon_fedexp = 0.0;
  int workers = 0;
};

struct StudyCell {
  std::size_t clients = 0;
  std::string rule;
  double eta_mean = 0.0;
  double eta_std = 0.0;
  double eta_target_mean = 0.0;
};

/// For each M in the grid: fresh heterogeneous regression data, one batch of
/// clean first-round updates, then repeated noise draws through each LDP
/// rule. Emits mean/std of the rule value and the mean unattainable target
/// ratio (clean numerator over the noisy denominator) per cell.
inline std::vector<StudyCell> step_size_study(const StepSizeStudyConfig& study) {
  validate(study.local);
  if (study.repeats < 2) throw config_error("study.repeats must be >= 2");
  if (study.client_grid.empty()) throw config_error("study.m_grid must not be empty");
  const double sigma = study.sigma > 0.0 ? study.sigma : 0.7 * study.local.clip_threshold;

  RngStream root(study.master_seed);
  std::vector<StudyCell> table;

  const auto summarize = [](const std::vector<double>& xs) {
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double v : xs) var += (v - mean) * (v - mean);
    var /= static_cast<double>(xs.size() - 1);
    return std::pair<double, double>(mean, std::sqrt(var));
  };

  for (std::size_t m : study.client_grid) {
    RngStream data_rng = root.child(stream_tag::kData, m);
    const FederatedDataset data = generate_synthetic_regression(m, study.dim, data_rng);
    const PrivUnitConfig pu_cfg = make_privunit_config(study.dim, study.eps0, study.eps1,
                                                       study.eps2, study.local.clip_threshold);
    const Vec w0(study.dim, 0.0);
    std::vector<Vec> deltas(m);
    detail::parallel_for(m, study.workers, [&](std::size_t i) {
      deltas[i] = clip(local_update(w0, data.clients[i], study.local, i),
                       study.local.clip_threshold);
    });
    double clean_sq_mean = 0.0;
    for (const Vec& d : deltas) clean_sq_mean += l2_norm_sq(d);
    clean_sq_mean /= static_cast<double>(m);

    std::vector<double> naive(study.repeats), corrected(study.repeats),
        privunit_rule(study.repeats), target_gauss(study.repeats), target_pu(study.repeats);
    RngStream noise_root = root.child(stream_tag::kStudy, m);
    detail::parallel_for(static_cast<std::size_t>(study.repeats), study.workers,
                         [&](std::size_t rep) {
      RngStream rep_rng = noise_root.child(rep);
      std::vector<Vec> gauss_c(m), pu_c(m);
      double noisy_sq = 0.0, s_mean = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        RngStream crng = rep_rng.child(i);
        gauss_c[i] = gaussian_local_randomize(deltas[i], {sigma}, crng);
        noisy_sq += l2_norm_sq(gauss_c[i]);
        pu_c[i] = privunit_randomize(deltas[i], pu_cfg, crng);
        s_mean += estimate_norm_squared(pu_c[i], pu_cfg);
      }
      noisy_sq /= static_cast<double>(m);
      s_mean /= static_cast<double>(m);
      const double denom_gauss =
          l2_norm_sq(aggregate_mean(gauss_c)) + study.epsilon_fedexp;
      const double denom_pu = l2_norm_sq(aggregate_mean(pu_c)) + study.epsilon_fedexp;

      naive[rep] = noisy_sq / denom_gauss;
      corrected[rep] = std::max(
          1.0, (noisy_sq - static_cast<double>(study.dim) * sigma * sigma) / denom_gauss);
      privunit_rule[rep] = std::max(1.0, s_mean / denom_pu);
      target_gauss[rep] = clean_sq_mean / denom_gauss;
      target_pu[rep] = clean_sq_mean / denom_pu;
    });

    const auto [nv_mean, nv_std] = summarize(naive);
    const auto [co_mean, co_std] = summarize(corrected);
    const auto [pu_mean, pu_std] = summarize(privunit_rule);
    const auto [tg_mean, tg_std] = summarize(target_gauss);
    const auto [tp_mean, tp_std] = summarize(target_pu);
    (void)tg_std;
    (void)tp_std;
    table.push_back({m, "naive_noisy", nv_mean, nv_std, tg_mean});
    table.push_back({m, "ldp_gaussian_corrected", co_mean, co_std, tg_mean});
    table.push_back({m, "ldp_privunit", pu_mean, pu_std, tp_mean});
  }
  return table;
}

}  // namespace dpfed
