#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dpfed/errors.hpp"
#include "dpfed/orchestrator.hpp"

namespace dpfed {

/// Flat "[section] / key = value" configuration text. Values keep their raw
/// string form; typed access happens at resolution time so error messages can
/// name the offending field.
struct RawConfig {
  std::map<std::string, std::string> values;  // "section.key" -> value

  bool has(const std::string& key) const { return values.count(key) > 0; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\''))) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

}  // namespace detail

inline RawConfig parse_config_text(std::istream& in) {
  RawConfig cfg;
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw config_error("config line " + std::to_string(line_no) + ": unterminated section header");
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw config_error("config line " + std::to_string(line_no) + ": empty section name");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::unquote(detail::trim(line.substr(eq + 1)));
    if (key.empty()) {
      throw config_error("config line " + std::to_string(line_no) + ": empty key");
    }
    const std::string full = section.empty() ? key : section + "." + key;
    cfg.values[full] = value;
  }
  return cfg;
}

inline RawConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  return parse_config_text(in);
}

/// Overrides have the form "section.key=value".
inline void apply_overrides(RawConfig& cfg, const std::vector<std::string>& overrides) {
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw config_error("override must look like section.key=value: " + o);
    }
    cfg.values[detail::trim(o.substr(0, eq))] = detail::unquote(detail::trim(o.substr(eq + 1)));
  }
}

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const RawConfig& cfg) : cfg_(cfg) {}

  double number(const std::string& key, double fallback) {
    seen_.insert(key);
    const auto it = cfg_.values.find(key);
    if (it == cfg_.values.end()) return fallback;
    return parse_number(key, it->second);
  }

  std::optional<double> optional_number(const std::string& key) {
    seen_.insert(key);
    const auto it = cfg_.values.find(key);
    if (it == cfg_.values.end()) return std::nullopt;
    return parse_number(key, it->second);
  }

  long integer(const std::string& key, long fallback) {
    const double v = number(key, static_cast<double>(fallback));
    if (v != std::floor(v)) throw config_error(key + ": expected an integer, got '" + raw(key) + "'");
    return static_cast<long>(v);
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    seen_.insert(key);
    const auto it = cfg_.values.find(key);
    if (it == cfg_.values.end()) return fallback;
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw config_error(key + ": expected an unsigned integer, got '" + it->second + "'");
    }
  }

  bool boolean(const std::string& key, bool fallback) {
    seen_.insert(key);
    const auto it = cfg_.values.find(key);
    if (it == cfg_.values.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw config_error(key + ": expected true/false, got '" + it->second + "'");
  }

  std::string text(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    const auto it = cfg_.values.find(key);
    return it == cfg_.values.end() ? fallback : it->second;
  }

  std::vector<double> number_list(const std::string& key) {
    seen_.insert(key);
    const auto it = cfg_.values.find(key);
    std::vector<double> out;
    if (it == cfg_.values.end()) return out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      out.push_back(parse_number(key, item));
    }
    return out;
  }

  /// Every key in the raw config must have been consumed by one of the
  /// accessors; unknown keys are almost always typos.
  void reject_unknown(const std::string& context) const {
    for (const auto& [key, value] : cfg_.values) {
      if (!seen_.count(key)) {
        throw config_error(context + ": unknown config key '" + key + "'");
      }
    }
  }

 private:
  std::string raw(const std::string& key) const {
    const auto it = cfg_.values.find(key);
    return it == cfg_.values.end() ? "" : it->second;
  }

  static double parse_number(const std::string& key, const std::string& text) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(text, &pos);
      if (pos != text.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      throw config_error(key + ": expected a number, got '" + text + "'");
    }
  }

  const RawConfig& cfg_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline Algorithm algorithm_from_name(const std::string& name) {
  if (name == "dp_fedavg") return Algorithm::kDpFedavg;
  if (name == "fedexp_clean") return Algorithm::kFedexpClean;
  if (name == "ldp_fedavg_gaussian") return Algorithm::kLdpFedavgGaussian;
  if (name == "ldp_fedexp_gaussian") return Algorithm::kLdpFedexpGaussian;
  if (name == "ldp_fedavg_privunit") return Algorithm::kLdpFedavgPrivunit;
  if (name == "ldp_fedexp_privunit") return Algorithm::kLdpFedexpPrivunit;
  if (name == "cdp_fedavg") return Algorithm::kCdpFedavg;
  if (name == "cdp_fedexp") return Algorithm::kCdpFedexp;
  throw config_error("run.algorithm: unknown algorithm '" + name + "'");
}

inline std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kDpFedavg: return "dp_fedavg";
    case Algorithm::kFedexpClean: return "fedexp_clean";
    case Algorithm::kLdpFedavgGaussian: return "ldp_fedavg_gaussian";
    case Algorithm::kLdpFedexpGaussian: return "ldp_fedexp_gaussian";
    case Algorithm::kLdpFedavgPrivunit: return "ldp_fedavg_privunit";
    case Algorithm::kLdpFedexpPrivunit: return "ldp_fedexp_privunit";
    case Algorithm::kCdpFedavg: return "cdp_fedavg";
    case Algorithm::kCdpFedexp: return "cdp_fedexp";
  }
  return "unknown";
}

inline StepVariant step_variant_from_name(const std::string& name) {
  if (name == "fixed") return StepVariant::kFixed;
  if (name == "fedexp_clean") return StepVariant::kFedexpClean;
  if (name == "naive_noisy") return StepVariant::kNaiveNoisy;
  if (name == "ldp_gaussian_corrected") return StepVariant::kLdpGaussianCorrected;
  if (name == "ldp_privunit") return StepVariant::kLdpPrivunit;
  if (name == "cdp_corrected") return StepVariant::kCdpCorrected;
  throw config_error("server.rule: unknown rule '" + name + "'");
}

inline std::string step_variant_name(StepVariant v) {
  switch (v) {
    case StepVariant::kFixed: return "fixed";
    case StepVariant::kFedexpClean: return "fedexp_clean";
    case StepVariant::kNaiveNoisy: return "naive_noisy";
    case StepVariant::kLdpGaussianCorrected: return "ldp_gaussian_corrected";
    case StepVariant::kLdpPrivunit: return "ldp_privunit";
    case StepVariant::kCdpCorrected: return "cdp_corrected";
  }
  return "unknown";
}

/// Grid specification for the hyperparameter sweep.
struct SweepSpec {
  std::vector<double> local_lr_grid;
  std::vector<double> clip_grid;
};

/// Builds a validated ExperimentConfig from raw key/values. Defaults follow
/// the benchmark settings: sigma = 0.7*C for the local Gaussian randomizer,
/// sigma = 5*C/sqrt(M) and sigma_xi = d*sigma^2/M for central noise, unit
/// budgets eps0 = eps1 = eps2 = 2, T = 50 rounds, last-2-iterate averaging.
inline ExperimentConfig resolve_experiment(const RawConfig& raw) {
  detail::ConfigReader r(raw);
  ExperimentConfig cfg;

  const std::string kind = r.text("dataset.kind", "regression");
  if (kind == "regression") {
    cfg.dataset.kind = DatasetSpec::Kind::kRegression;
  } else if (kind == "classification") {
    cfg.dataset.kind = DatasetSpec::Kind::kClassification;
  } else {
    throw config_error("dataset.kind: expected regression|classification, got '" + kind + "'");
  }
  cfg.dataset.dim = static_cast<std::size_t>(r.integer("dataset.dim", 100));
  cfg.dataset.clients = static_cast<std::size_t>(r.integer("dataset.clients", 1000));
  cfg.dataset.classes = static_cast<int>(r.integer("dataset.classes", 10));
  cfg.dataset.samples_per_client = static_cast<int>(r.integer("dataset.samples_per_client", 5));
  cfg.dataset.dirichlet_alpha = r.number("dataset.dirichlet_alpha", 0.3);
  if (cfg.dataset.dim < 1) throw config_error("dataset.dim must be >= 1");
  if (cfg.dataset.clients < 1) throw config_error("dataset.clients must be >= 1");

  cfg.local.local_steps = static_cast<int>(r.integer("client.local_steps", 20));
  cfg.local.local_lr = r.number("client.local_lr", 0.003);
  cfg.local.clip_threshold = r.number("client.clip", 0.3);
  validate(cfg.local);

  cfg.algorithm = algorithm_from_name(r.text("run.algorithm", "dp_fedavg"));
  cfg.mechanism.kind = mechanism_for(cfg.algorithm);
  cfg.rounds = static_cast<int>(r.integer("run.rounds", 50));
  cfg.master_seed = r.u64("run.seed", 1);
  cfg.last_k_average = static_cast<int>(r.integer("run.last_k_average", 2));
  cfg.record_eta_target = r.boolean("run.record_eta_target", true);
  cfg.delta = r.number("run.delta", 1e-5);
  cfg.workers = static_cast<int>(r.integer("run.workers", 0));
  if (cfg.rounds < 1) throw config_error("run.rounds must be >= 1");
  if (cfg.last_k_average < 1) throw config_error("run.last_k_average must be >= 1");
  if (!(cfg.delta > 0.0) || !(cfg.delta < 1.0)) throw config_error("run.delta must lie in (0, 1)");

  const double c = cfg.local.clip_threshold;
  const auto sigma = r.optional_number("mechanism.sigma");
  const auto sigma_xi = r.optional_number("mechanism.sigma_xi");
  cfg.mechanism.eps0 = r.number("mechanism.eps0", 2.0);
  cfg.mechanism.eps1 = r.number("mechanism.eps1", 2.0);
  cfg.mechanism.eps2 = r.number("mechanism.eps2", 2.0);
  switch (cfg.mechanism.kind) {
    case MechanismKind::kGaussianLocal:
      cfg.mechanism.sigma = sigma.value_or(0.7 * c);
      break;
    case MechanismKind::kCentralGaussian: {
      cfg.mechanism.sigma = sigma.value_or(5.0 * c / std::sqrt(static_cast<double>(cfg.dataset.clients)));
      const std::size_t model_dim = cfg.dataset.kind == DatasetSpec::Kind::kRegression
                                        ? cfg.dataset.dim
                                        : cfg.dataset.dim * static_cast<std::size_t>(cfg.dataset.classes);
      cfg.mechanism.sigma_xi = sigma_xi.value_or(static_cast<double>(model_dim) *
                                                 cfg.mechanism.sigma * cfg.mechanism.sigma /
                                                 static_cast<double>(cfg.dataset.clients));
      break;
    }
    default:
      cfg.mechanism.sigma = sigma.value_or(0.0);
      break;
  }

  cfg.rule = default_rule_for(cfg.algorithm);
  const std::string rule_name = r.text("server.rule", "auto");
  if (rule_name != "auto") cfg.rule.variant = step_variant_from_name(rule_name);
  cfg.rule.fixed_eta = r.number("server.fixed_eta", 1.0);
  cfg.rule.epsilon_fedexp = r.number("server.epsilon_fedexp", 0.0);
  if (cfg.rule.variant == StepVariant::kFixed && !(cfg.rule.fixed_eta > 0.0)) {
    throw config_error("server.fixed_eta must be > 0");
  }
  if (cfg.rule.epsilon_fedexp < 0.0) throw config_error("server.epsilon_fedexp must be >= 0");

  // sweep/study sections are consumed by their own resolvers; mark them seen.
  r.number_list("sweep.local_lr_grid");
  r.number_list("sweep.clip_grid");
  r.number_list("study.m_grid");
  r.integer("study.repeats", 0);
  r.reject_unknown("config");
  return cfg;
}

inline SweepSpec resolve_sweep(const RawConfig& raw) {
  detail::ConfigReader r(raw);
  SweepSpec spec;
  spec.local_lr_grid = r.number_list("sweep.local_lr_grid");
  spec.clip_grid = r.number_list("sweep.clip_grid");
  if (spec.local_lr_grid.empty() || spec.clip_grid.empty()) {
    throw config_error("sweep requires sweep.local_lr_grid and sweep.clip_grid");
  }
  for (double v : spec.local_lr_grid) {
    if (!(v > 0.0)) throw config_error("sweep.local_lr_grid: entries must be > 0");
  }
  for (double v : spec.clip_grid) {
    if (!(v > 0.0)) throw config_error("sweep.clip_grid: entries must be > 0");
  }
  return spec;
}

inline StepSizeStudyConfig resolve_study(const RawConfig& raw, const ExperimentConfig& base) {
  detail::ConfigReader r(raw);
  StepSizeStudyConfig study;
  study.dim = base.dataset.dim;
  study.local = base.local;
  study.sigma = base.mechanism.kind == MechanismKind::kGaussianLocal ? base.mechanism.sigma
                                                                     : 0.7 * base.local.clip_threshold;
  study.eps0 = base.mechanism.eps0;
  study.eps1 = base.mechanism.eps1;
  study.eps2 = base.mechanism.eps2;
  study.master_seed = base.master_seed;
  study.epsilon_fedexp = base.rule.epsilon_fedexp;
  study.workers = base.workers;
  study.client_grid.clear();
  for (double v : r.number_list("study.m_grid")) {
    if (!(v >= 1.0) || v != std::floor(v)) {
      throw config_error("study.m_grid: entries must be positive integers");
    }
    study.client_grid.push_back(static_cast<std::size_t>(v));
  }
  if (study.client_grid.empty()) study.client_grid = {10, 100, 1000};
  study.repeats = static_cast<int>(r.integer("study.repeats", 50));
  if (study.repeats < 2) throw config_error("study.repeats must be >= 2");
  return study;
}

}  // namespace dpfed
