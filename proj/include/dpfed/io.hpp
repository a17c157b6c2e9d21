#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpfed/config.hpp"
#include "dpfed/data.hpp"
#include "dpfed/errors.hpp"
#include "dpfed/orchestrator.hpp"

namespace dpfed {

using nlohmann::json;

/// 17 significant digits, C locale, round-trips any finite double exactly.
inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline const char* rounds_csv_header() {
  return "round,eta_g,eta_target,c_bar_norm,train_loss,dist_to_optimum,eps_spent,rho_spent";
}

inline void append_round_csv(std::ostream& out, const RoundReport& r) {
  out << r.round << ',' << format_g17(r.eta_g) << ','
      << (r.eta_target ? format_g17(*r.eta_target) : "nan") << ','
      << format_g17(r.c_bar_norm) << ',' << format_g17(r.train_loss) << ','
      << (r.dist_to_optimum ? format_g17(*r.dist_to_optimum) : "nan") << ','
      << format_g17(r.ledger.eps_total()) << ',' << format_g17(r.ledger.rho_total())
      << '\n';
}

inline const char* privacy_regime_name(PrivacyRegime r) {
  switch (r) {
    case PrivacyRegime::kNone: return "none";
    case PrivacyRegime::kLdpGaussian: return "ldp_gaussian";
    case PrivacyRegime::kLdpPrivunit: return "ldp_privunit";
    case PrivacyRegime::kCdp: return "cdp";
  }
  return "unknown";
}

inline json ledger_to_json(const PrivacyLedger& ledger) {
  json j;
  j["regime"] = privacy_regime_name(ledger.regime);
  j["rho_per_round"] = ledger.rho;
  j["rho_xi_per_round"] = ledger.rho_xi;
  j["pure_eps_per_round"] = ledger.pure_eps;
  j["rounds_composed"] = ledger.rounds_composed;
  j["delta"] = ledger.delta;
  j["rho_total"] = ledger.rho_total();
  j["eps_per_round"] = ledger.eps_per_round();
  j["eps_total"] = ledger.eps_total();
  return j;
}

/// Config echo: serializes every resolved field so a run can be reproduced
/// from its summary file alone.
inline json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["dataset"]["kind"] =
      cfg.dataset.kind == DatasetSpec::Kind::kRegression ? "regression" : "classification";
  j["dataset"]["dim"] = cfg.dataset.dim;
  j["dataset"]["clients"] = cfg.dataset.clients;
  j["dataset"]["classes"] = cfg.dataset.classes;
  j["dataset"]["samples_per_client"] = cfg.dataset.samples_per_client;
  j["dataset"]["dirichlet_alpha"] = cfg.dataset.dirichlet_alpha;
  j["client"]["local_steps"] = cfg.local.local_steps;
  j["client"]["local_lr"] = cfg.local.local_lr;
  j["client"]["clip"] = cfg.local.clip_threshold;
  j["mechanism"]["sigma"] = cfg.mechanism.sigma;
  j["mechanism"]["sigma_xi"] = cfg.mechanism.sigma_xi;
  j["mechanism"]["eps0"] = cfg.mechanism.eps0;
  j["mechanism"]["eps1"] = cfg.mechanism.eps1;
  j["mechanism"]["eps2"] = cfg.mechanism.eps2;
  j["server"]["rule"] = step_variant_name(cfg.rule.variant);
  j["server"]["fixed_eta"] = cfg.rule.fixed_eta;
  j["server"]["epsilon_fedexp"] = cfg.rule.epsilon_fedexp;
  j["run"]["algorithm"] = algorithm_name(cfg.algorithm);
  j["run"]["rounds"] = cfg.rounds;
  j["run"]["seed"] = cfg.master_seed;
  j["run"]["last_k_average"] = cfg.last_k_average;
  j["run"]["record_eta_target"] = cfg.record_eta_target;
  j["run"]["delta"] = cfg.delta;
  j["run"]["workers"] = cfg.workers;
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  const std::string kind = j.at("dataset").at("kind").get<std::string>();
  cfg.dataset.kind = kind == "regression" ? DatasetSpec::Kind::kRegression
                                          : DatasetSpec::Kind::kClassification;
  cfg.dataset.dim = j.at("dataset").at("dim").get<std::size_t>();
  cfg.dataset.clients = j.at("dataset").at("clients").get<std::size_t>();
  cfg.dataset.classes = j.at("dataset").at("classes").get<int>();
  cfg.dataset.samples_per_client = j.at("dataset").at("samples_per_client").get<int>();
  cfg.dataset.dirichlet_alpha = j.at("dataset").at("dirichlet_alpha").get<double>();
  cfg.local.local_steps = j.at("client").at("local_steps").get<int>();
  cfg.local.local_lr = j.at("client").at("local_lr").get<double>();
  cfg.local.clip_threshold = j.at("client").at("clip").get<double>();
  cfg.mechanism.sigma = j.at("mechanism").at("sigma").get<double>();
  cfg.mechanism.sigma_xi = j.at("mechanism").at("sigma_xi").get<double>();
  cfg.mechanism.eps0 = j.at("mechanism").at("eps0").get<double>();
  cfg.mechanism.eps1 = j.at("mechanism").at("eps1").get<double>();
  cfg.mechanism.eps2 = j.at("mechanism").at("eps2").get<double>();
  cfg.algorithm = algorithm_from_name(j.at("run").at("algorithm").get<std::string>());
  cfg.mechanism.kind = mechanism_for(cfg.algorithm);
  cfg.rule.variant = step_variant_from_name(j.at("server").at("rule").get<std::string>());
  cfg.rule.fixed_eta = j.at("server").at("fixed_eta").get<double>();
  cfg.rule.epsilon_fedexp = j.at("server").at("epsilon_fedexp").get<double>();
  cfg.rounds = j.at("run").at("rounds").get<int>();
  cfg.master_seed = j.at("run").at("seed").get<std::uint64_t>();
  cfg.last_k_average = j.at("run").at("last_k_average").get<int>();
  cfg.record_eta_target = j.at("run").at("record_eta_target").get<bool>();
  cfg.delta = j.at("run").at("delta").get<double>();
  cfg.workers = j.at("run").at("workers").get<int>();
  return cfg;
}

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return config_to_json(a) == config_to_json(b);
}

// --------------------------------------------------------------------------
// Dataset exchange format: {d, M, clients:[...], optimum} for
// cross-implementation regression tests.

inline json dataset_to_json(const FederatedDataset& ds) {
  json j;
  j["d"] = ds.feature_dim;
  j["M"] = ds.clients.size();
  json clients = json::array();
  for (const ClientData& c : ds.clients) {
    if (const auto* reg = std::get_if<RegressionClient>(&c)) {
      clients.push_back({{"x", reg->x}, {"y", reg->y}});
    } else {
      const auto& cl = std::get<ClassificationClient>(c);
      clients.push_back({{"features", cl.features},
                         {"labels", cl.labels},
                         {"classes", cl.num_classes}});
    }
  }
  j["clients"] = std::move(clients);
  if (ds.optimum) {
    j["optimum"] = *ds.optimum;
  } else {
    j["optimum"] = nullptr;
  }
  return j;
}

inline void write_dataset_json(const std::string& path, const FederatedDataset& ds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << dataset_to_json(ds).dump(2) << '\n';
}

inline FederatedDataset dataset_from_json(const json& j) {
  FederatedDataset ds;
  ds.feature_dim = j.at("d").get<std::size_t>();
  for (const json& c : j.at("clients")) {
    if (c.contains("x")) {
      RegressionClient reg;
      reg.x = c.at("x").get<Vec>();
      reg.y = c.at("y").get<double>();
      ds.clients.emplace_back(std::move(reg));
    } else {
      ClassificationClient cl;
      cl.features = c.at("features").get<std::vector<Vec>>();
      cl.labels = c.at("labels").get<std::vector<int>>();
      cl.num_classes = c.at("classes").get<int>();
      ds.clients.emplace_back(std::move(cl));
    }
  }
  if (!j.at("optimum").is_null()) ds.optimum = j.at("optimum").get<Vec>();
  if (ds.clients.size() != j.at("M").get<std::size_t>()) {
    throw config_error("dataset json: M does not match client count");
  }
  return ds;
}

inline FederatedDataset read_dataset_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open dataset file: " + path);
  json j;
  in >> j;
  return dataset_from_json(j);
}

// --------------------------------------------------------------------------
// Step-size study table.

inline void write_study_csv(std::ostream& out, const std::vector<StudyCell>& table) {
  out << "clients,rule,eta_mean,eta_std,eta_target_mean\n";
  for (const StudyCell& cell : table) {
    out << cell.clients << ',' << cell.rule << ',' << format_g17(cell.eta_mean) << ','
        << format_g17(cell.eta_std) << ',' << format_g17(cell.eta_target_mean) << '\n';
  }
}

inline std::vector<StudyCell> parse_study_csv(std::istream& in) {
  std::vector<StudyCell> table;
  std::string line;
  if (!std::getline(in, line)) throw config_error("study csv: empty file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    StudyCell cell;
    std::getline(ss, field, ',');
    cell.clients = std::stoull(field);
    std::getline(ss, cell.rule, ',');
    std::getline(ss, field, ',');
    cell.eta_mean = std::stod(field);
    std::getline(ss, field, ',');
    cell.eta_std = std::stod(field);
    std::getline(ss, field, ',');
    cell.eta_target_mean = std::stod(field);
    table.push_back(std::move(cell));
  }
  return table;
}

}  // namespace dpfed
