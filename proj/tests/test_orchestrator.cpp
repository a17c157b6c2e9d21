#include <cmath>

#include <gtest/gtest.h>

#include "dpfed/accountant.hpp"
#include "dpfed/orchestrator.hpp"

namespace dpfed {
namespace {

ExperimentConfig small_config(Algorithm alg) {
  ExperimentConfig cfg;
  cfg.dataset.kind = DatasetSpec::Kind::kRegression;
  cfg.dataset.dim = 20;
  cfg.dataset.clients = 40;
  cfg.algorithm = alg;
  cfg.local = {5, 0.01, 0.5};
  cfg.mechanism.kind = mechanism_for(alg);
  cfg.mechanism.sigma = 0.7 * cfg.local.clip_threshold;
  cfg.mechanism.sigma_xi = 0.01;
  cfg.rule = default_rule_for(alg);
  cfg.rounds = 5;
  cfg.master_seed = 2023;
  cfg.workers = 1;
  return cfg;
}

void expect_identical(const ExperimentResult& a, const ExperimentResult& b) {
  ASSERT_EQ(a.reports.size(), b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    EXPECT_EQ(a.reports[i].eta_g, b.reports[i].eta_g);
    EXPECT_EQ(a.reports[i].c_bar_norm, b.reports[i].c_bar_norm);
    EXPECT_EQ(a.reports[i].train_loss, b.reports[i].train_loss);
  }
  EXPECT_EQ(a.final_model, b.final_model);
  EXPECT_EQ(a.last_iterate, b.last_iterate);
}

// Every adaptive algorithm collapses onto its fixed-step baseline when the
// rule is pinned to 1, bit for bit, because randomness is keyed by
// (round, client), not by draw order.
TEST(Engine, FixedRuleReproducesAveragingBaseline) {
  const std::pair<Algorithm, Algorithm> pairs[] = {
      {Algorithm::kLdpFedexpGaussian, Algorithm::kLdpFedavgGaussian},
      {Algorithm::kLdpFedexpPrivunit, Algorithm::kLdpFedavgPrivunit},
      {Algorithm::kCdpFedexp, Algorithm::kCdpFedavg},
  };
  for (const auto& [fedexp_alg, fedavg_alg] : pairs) {
    ExperimentConfig adaptive = small_config(fedexp_alg);
    adaptive.rule = StepSizeRule{StepVariant::kFixed, 1.0};
    const ExperimentConfig baseline = small_config(fedavg_alg);
    expect_identical(run_experiment(adaptive), run_experiment(baseline));
  }
}

// Independent reference: clean extrapolation with the clamp, written as a
// plain loop over gradient steps. sigma -> 0 must collapse the noisy
// trajectories onto it within 1e-6 per coordinate.
std::vector<Vec> clean_clamped_reference(const FederatedDataset& data,
                                         const LocalTrainConfig& local, int rounds) {
  Vec w(data.feature_dim, 0.0);
  std::vector<Vec> iterates;
  for (int t = 0; t < rounds; ++t) {
    std::vector<Vec> deltas;
    double mean_sq = 0.0;
    for (const ClientData& c : data.clients) {
      Vec wi = w;
      for (int k = 0; k < local.local_steps; ++k) {
        add_scaled(wi, -local.local_lr, gradient(c, wi));
      }
      Vec d = sub(wi, w);
      const double n = l2_norm(d);
      if (n > local.clip_threshold) d = scaled(d, local.clip_threshold / n);
      mean_sq += l2_norm_sq(d);
      deltas.push_back(std::move(d));
    }
    mean_sq /= static_cast<double>(data.clients.size());
    Vec c_bar(data.feature_dim, 0.0);
    for (const Vec& d : deltas) add_scaled(c_bar, 1.0 / data.clients.size(), d);
    const double eta = std::max(1.0, mean_sq / l2_norm_sq(c_bar));
    add_scaled(w, eta, c_bar);
    iterates.push_back(w);
  }
  return iterates;
}

TEST(Engine, VanishingNoiseMatchesCleanClampedReference) {
  for (Algorithm alg : {Algorithm::kLdpFedexpGaussian, Algorithm::kCdpFedexp}) {
    ExperimentConfig cfg = small_config(alg);
    cfg.mechanism.sigma = 1e-15;
    cfg.mechanism.sigma_xi = 1e-15;

    RngStream root(cfg.master_seed);
    const FederatedDataset data =
        generate_dataset(cfg.dataset, root.child(stream_tag::kData, 0));
    const std::vector<Vec> reference =
        clean_clamped_reference(data, cfg.local, cfg.rounds);

    std::vector<Vec> actual;
    TrainingEngine engine(cfg, data);
    Vec w(data.feature_dim, 0.0);
    for (int t = 1; t <= cfg.rounds; ++t) {
      engine.run_round(t, w);
      actual.push_back(w);
    }
    for (int t = 0; t < cfg.rounds; ++t) {
      for (std::size_t j = 0; j < data.feature_dim; ++j) {
        EXPECT_NEAR(actual[t][j], reference[t][j], 1e-6)
            << "alg=" << static_cast<int>(alg) << " round=" << t << " coord=" << j;
      }
    }
  }
}

TEST(Engine, SingleClientRoundDecreasesLoss) {
  ExperimentConfig cfg = small_config(Algorithm::kDpFedavg);
  cfg.dataset.clients = 1;
  cfg.dataset.dim = 4;
  cfg.local = {1, 0.01, 100.0};  // effectively unclipped single gradient step
  cfg.rounds = 1;
  RngStream root(cfg.master_seed);
  const FederatedDataset data = generate_dataset(cfg.dataset, root.child(stream_tag::kData, 0));
  TrainingEngine engine(cfg, data);
  const double initial_loss = engine.mean_loss(Vec(4, 0.0));
  const ExperimentResult result = run_experiment(cfg, data);
  EXPECT_LT(result.reports.back().train_loss, initial_loss);
}

TEST(Engine, SeedDeterminismAndWorkerInvariance) {
  for (Algorithm alg :
       {Algorithm::kLdpFedexpGaussian, Algorithm::kLdpFedexpPrivunit, Algorithm::kCdpFedexp}) {
    ExperimentConfig cfg = small_config(alg);
    cfg.workers = 1;
    const ExperimentResult serial = run_experiment(cfg);
    const ExperimentResult serial2 = run_experiment(cfg);
    expect_identical(serial, serial2);
    cfg.workers = 4;
    const ExperimentResult parallel = run_experiment(cfg);
    expect_identical(serial, parallel);
  }
}

TEST(Engine, DifferentSeedsDiverge) {
  ExperimentConfig cfg = small_config(Algorithm::kLdpFedexpGaussian);
  ExperimentConfig other = cfg;
  other.master_seed = cfg.master_seed + 1;
  const ExperimentResult a = run_experiment(cfg);
  const ExperimentResult b = run_experiment(other);
  EXPECT_NE(a.final_model, b.final_model);
}

TEST(Engine, LedgerMatchesAccountantClosedForms) {
  {
    ExperimentConfig cfg = small_config(Algorithm::kLdpFedexpGaussian);
    const ExperimentResult r = run_experiment(cfg);
    const PrivacyLedger& ledger = r.reports.back().ledger;
    EXPECT_EQ(ledger.regime, PrivacyRegime::kLdpGaussian);
    EXPECT_EQ(ledger.rounds_composed, cfg.rounds);
    EXPECT_DOUBLE_EQ(ledger.rho,
                     ldp_gaussian_rho(cfg.local.clip_threshold, cfg.mechanism.sigma));
    EXPECT_DOUBLE_EQ(ledger.rho_total(), cfg.rounds * ledger.rho);
  }
  {
    ExperimentConfig cfg = small_config(Algorithm::kCdpFedexp);
    const ExperimentResult r = run_experiment(cfg);
    const PrivacyLedger& ledger = r.reports.back().ledger;
    const auto [rho, rho_xi] =
        cdp_rho(cfg.local.clip_threshold, cfg.mechanism.sigma, cfg.mechanism.sigma_xi,
                cfg.dataset.clients, cfg.rounds);
    EXPECT_EQ(ledger.regime, PrivacyRegime::kCdp);
    EXPECT_NEAR(ledger.rho_total(), rho + rho_xi, 1e-12 * (rho + rho_xi));
  }
  {
    ExperimentConfig cfg = small_config(Algorithm::kLdpFedexpPrivunit);
    const ExperimentResult r = run_experiment(cfg);
    EXPECT_DOUBLE_EQ(r.reports.back().ledger.eps_total(), cfg.rounds * 6.0);
  }
  {
    // the plain averaging baseline spends no scalar-noise budget
    ExperimentConfig cfg = small_config(Algorithm::kCdpFedavg);
    const ExperimentResult r = run_experiment(cfg);
    EXPECT_DOUBLE_EQ(r.reports.back().ledger.rho_xi, 0.0);
  }
}

TEST(Engine, FinalModelAveragesLastTwoIterates) {
  ExperimentConfig cfg = small_config(Algorithm::kFedexpClean);
  cfg.rounds = 4;
  cfg.last_k_average = 2;
  RngStream root(cfg.master_seed);
  const FederatedDataset data = generate_dataset(cfg.dataset, root.child(stream_tag::kData, 0));

  TrainingEngine engine(cfg, data);
  Vec w(data.feature_dim, 0.0);
  std::vector<Vec> iterates;
  for (int t = 1; t <= cfg.rounds; ++t) {
    engine.run_round(t, w);
    iterates.push_back(w);
  }
  const ExperimentResult result = run_experiment(cfg, data);
  EXPECT_EQ(result.last_iterate, iterates.back());
  const Vec expected = average_last_k(iterates, 2);
  EXPECT_EQ(result.final_model, expected);
}

TEST(Engine, DegenerateRoundFallsBackToUnitStep) {
  // all clients already at the shared optimum from w = 0: zero updates,
  // zero aggregate norm, the engine warns and keeps eta_g = 1
  FederatedDataset data;
  data.feature_dim = 2;
  for (int i = 0; i < 4; ++i) {
    data.clients.emplace_back(RegressionClient{{1.0 + i, 0.5}, 0.0});
  }
  data.optimum = Vec{0.0, 0.0};
  ExperimentConfig cfg = small_config(Algorithm::kFedexpClean);
  cfg.dataset.dim = 2;
  cfg.dataset.clients = 4;
  cfg.rounds = 2;
  const ExperimentResult r = run_experiment(cfg, data);
  for (const RoundReport& report : r.reports) {
    EXPECT_DOUBLE_EQ(report.eta_g, 1.0);
    EXPECT_DOUBLE_EQ(report.train_loss, 0.0);
  }
}

TEST(Engine, RejectsInvalidConfigs) {
  {
    ExperimentConfig cfg = small_config(Algorithm::kLdpFedexpGaussian);
    cfg.rounds = 0;
    EXPECT_THROW(run_experiment(cfg), config_error);
  }
  {
    ExperimentConfig cfg = small_config(Algorithm::kLdpFedexpGaussian);
    cfg.mechanism.sigma = 0.0;
    EXPECT_THROW(run_experiment(cfg), config_error);
  }
  {
    // estimated-norm rule on a Gaussian mechanism is incoherent
    ExperimentConfig cfg = small_config(Algorithm::kLdpFedexpGaussian);
    cfg.rule.variant = StepVariant::kLdpPrivunit;
    EXPECT_THROW(run_experiment(cfg), config_error);
  }
  {
    // the clean rule cannot run behind a local randomizer
    ExperimentConfig cfg = small_config(Algorithm::kLdpFedexpGaussian);
    cfg.rule.variant = StepVariant::kFedexpClean;
    EXPECT_THROW(run_experiment(cfg), config_error);
  }
}

TEST(Engine, EtaTargetRecordingFollowsFlag) {
  ExperimentConfig cfg = small_config(Algorithm::kLdpFedexpGaussian);
  cfg.record_eta_target = true;
  const ExperimentResult with_target = run_experiment(cfg);
  EXPECT_TRUE(with_target.reports.front().eta_target.has_value());
  cfg.record_eta_target = false;
  const ExperimentResult without = run_experiment(cfg);
  EXPECT_FALSE(without.reports.front().eta_target.has_value());
}

TEST(Engine, ClassificationPathTrains) {
  ExperimentConfig cfg;
  cfg.dataset.kind = DatasetSpec::Kind::kClassification;
  cfg.dataset.dim = 6;
  cfg.dataset.clients = 30;
  cfg.dataset.classes = 3;
  cfg.dataset.samples_per_client = 8;
  cfg.dataset.dirichlet_alpha = 0.3;
  cfg.algorithm = Algorithm::kCdpFedexp;
  cfg.mechanism.kind = mechanism_for(cfg.algorithm);
  cfg.local = {5, 0.05, 1.0};
  cfg.mechanism.sigma = 5.0 * cfg.local.clip_threshold / std::sqrt(30.0);
  cfg.mechanism.sigma_xi = 18.0 * cfg.mechanism.sigma * cfg.mechanism.sigma / 30.0;
  cfg.rule = default_rule_for(cfg.algorithm);
  cfg.rounds = 10;
  cfg.master_seed = 5;
  const ExperimentResult r = run_experiment(cfg);
  // from the zero model the loss starts at log K
  EXPECT_LT(r.reports.back().train_loss, std::log(3.0));
  EXPECT_FALSE(r.reports.back().dist_to_optimum.has_value());
}

TEST(StepSizeStudy, TableShapeAndFiniteness) {
  StepSizeStudyConfig study;
  study.client_grid = {20, 80};
  study.repeats = 10;
  study.dim = 16;
  study.local = {5, 0.01, 0.5};
  study.sigma = 0.35;
  study.master_seed = 9;
  study.workers = 2;
  const std::vector<StudyCell> table = step_size_study(study);
  ASSERT_EQ(table.size(), 6u);  // 3 rules x 2 client counts
  for (const StudyCell& cell : table) {
    EXPECT_TRUE(std::isfinite(cell.eta_mean));
    EXPECT_TRUE(std::isfinite(cell.eta_std));
    EXPECT_TRUE(std::isfinite(cell.eta_target_mean));
    EXPECT_GE(cell.eta_std, 0.0);
  }
  // naive rule carries the d sigma^2 bias; the corrected rule does not
  const auto find = [&](std::size_t m, const std::string& rule) {
    for (const StudyCell& c : table) {
      if (c.clients == m && c.rule == rule) return c;
    }
    throw std::runtime_error("cell not found");
  };
  for (std::size_t m : study.client_grid) {
    EXPECT_GT(find(m, "naive_noisy").eta_mean, find(m, "ldp_gaussian_corrected").eta_mean);
  }
}

TEST(StepSizeStudy, DeterministicUnderSeed) {
  StepSizeStudyConfig study;
  study.client_grid = {15};
  study.repeats = 5;
  study.dim = 8;
  study.local = {3, 0.01, 0.5};
  study.master_seed = 11;
  const auto a = step_size_study(study);
  const auto b = step_size_study(study);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].eta_mean, b[i].eta_mean);
    EXPECT_EQ(a[i].eta_std, b[i].eta_std);
  }
}

}  // namespace
}  // namespace dpfed
