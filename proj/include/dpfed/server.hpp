#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dpfed/errors.hpp"
#include "dpfed/vec.hpp"

namespace dpfed {

enum class StepVariant {
  kFixed,                 // constant eta_g
  kFedexpClean,           // clean mean-sq over mean-norm-sq, no clamp
  kNaiveNoisy,            // same ratio on noisy updates, no clamp
  kLdpGaussianCorrected,  // subtract d*sigma^2 bias, clamp at 1
  kLdpPrivunit,           // debiased norm estimates, clamp at 1
  kCdpCorrected,          // clean numerator + scalar noise, clamp at 1
};

struct StepSizeRule {
  StepVariant variant = StepVariant::kFixed;
  double fixed_eta = 1.0;
  // Optional additive denominator constant from the original extrapolation
  // rule; 0 reproduces the formulas used here.
  double epsilon_fedexp = 0.0;
};

/// Per-round server inputs. Clean and noisy quantities are separate fields
/// so a rule can never silently read data a real server would not have.
struct StepSizeInputs {
  double noisy_sq_mean = std::numeric_limits<double>::quiet_NaN();
  double clean_sq_mean_plus_xi = std::numeric_limits<double>::quiet_NaN();
  double privunit_s_mean = std::numeric_limits<double>::quiet_NaN();
  double c_bar_norm_sq = std::numeric_limits<double>::quiet_NaN();
  std::size_t dim = 0;
  double sigma = 0.0;
};

struct AggregateResult {
  Vec c_bar;
  double sum_sq_clean = 0.0;      // (1/M) sum ||Delta_i||^2 (simulator-side)
  double sum_sq_estimated = 0.0;  // the rule's numerator
  double eta_g = 1.0;
  double eta_target = std::numeric_limits<double>::quiet_NaN();
};

inline Vec aggregate_mean(const std::vector<Vec>& updates) {
  if (updates.empty()) throw std::invalid_argument("aggregate_mean: empty update list");
  Vec acc(updates.front().size(), 0.0);
  for (const Vec& u : updates) {
    check_same_dim(acc, u, "aggregate_mean");
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += u[i];
  }
  const double inv = 1.0 / static_cast<double>(updates.size());
  for (auto& v : acc) v *= inv;
  return acc;
}

namespace detail {

inline double require_input(double v, const char* name) {
  if (std::isnan(v)) {
    throw std::invalid_argument(std::string("step_size: rule requires input ") + name);
  }
  return v;
}

}  // namespace detail

/// Evaluates the configured step-size rule. Corrected rules clamp below at
/// 1; the clean and naive ratios are returned raw. Throws
/// degenerate_round_error when the denominator vanishes under a ratio rule;
/// callers decide the fallback.
inline double step_size(const StepSizeRule& rule, const StepSizeInputs& in) {
  if (rule.variant == StepVariant::kFixed) {
    if (!(rule.fixed_eta > 0.0)) throw std::invalid_argument("fixed step size must be > 0");
    return rule.fixed_eta;
  }
  const double denom = detail::require_input(in.c_bar_norm_sq, "c_bar_norm_sq") +
                       rule.epsilon_fedexp;
  if (denom <= 0.0) {
    throw degenerate_round_error("step_size: aggregated update has zero norm");
  }
  switch (rule.variant) {
    case StepVariant::kFedexpClean:
      return detail::require_input(in.clean_sq_mean_plus_xi, "clean_sq_mean") / denom;
    case StepVariant::kNaiveNoisy:
      return detail::require_input(in.noisy_sq_mean, "noisy_sq_mean") / denom;
    case StepVariant::kLdpGaussianCorrected: {
      const double num = detail::require_input(in.noisy_sq_mean, "noisy_sq_mean") -
                         static_cast<double>(in.dim) * in.sigma * in.sigma;
      return std::max(1.0, num / denom);
    }
    case StepVariant::kLdpPrivunit:
      return std::max(1.0, detail::require_input(in.privunit_s_mean, "privunit_s_mean") / denom);
    case StepVariant::kCdpCorrected:
      return std::max(1.0,
                      detail::require_input(in.clean_sq_mean_plus_xi, "clean_sq_mean_plus_xi") / denom);
    default:
      throw std::invalid_argument("step_size: unknown rule");
  }
}

inline Vec apply_global_update(const Vec& w, const Vec& c_bar, double eta_g) {
  check_same_dim(w, c_bar, "apply_global_update");
  Vec out = w;
  add_scaled(out, eta_g, c_bar);
  return out;
}

inline Vec average_last_k(const std::vector<Vec>& iterates, std::size_t k) {
  if (k < 1 || k > iterates.size()) {
    throw std::invalid_argument("average_last_k: k outside [1, history length]");
  }
  Vec acc(iterates.back().size(), 0.0);
  for (std::size_t i = iterates.size() - k; i < iterates.size(); ++i) {
    check_same_dim(acc, iterates[i], "average_last_k");
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += iterates[i][j];
  }
  for (auto& v : acc) v /= static_cast<double>(k);
  return acc;
}

}  // namespace dpfed
