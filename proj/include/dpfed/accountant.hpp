#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <utility>

namespace dpfed {

/// Per-round RDP rate of the local Gaussian mechanism (sensitivity 2C):
/// epsilon(alpha) = alpha * rho with rho = 2 C^2 / sigma^2.
inline double ldp_gaussian_rho(double clip_threshold, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("ldp_gaussian_rho: sigma must be > 0");
  return 2.0 * clip_threshold * clip_threshold / (sigma * sigma);
}

/// T-round central RDP rates: (rho, rho_xi) for the vector aggregate and the
/// scalar step-size numerator.
inline std::pair<double, double> cdp_rho(double clip_threshold, double sigma,
                                         double sigma_xi, std::size_t num_clients,
                                         int rounds) {
  if (!(sigma > 0.0) || !(sigma_xi > 0.0)) {
    throw std::invalid_argument("cdp_rho: noise scales must be > 0");
  }
  if (num_clients == 0 || rounds < 1) {
    throw std::invalid_argument("cdp_rho: M and T must be >= 1");
  }
  const double c2 = clip_threshold * clip_threshold;
  const double m = static_cast<double>(num_clients);
  const double t = static_cast<double>(rounds);
  const double rho = 2.0 * c2 * t / (m * sigma * sigma);
  const double rho_xi = c2 * c2 * t / (2.0 * m * m * sigma_xi * sigma_xi);
  return {rho, rho_xi};
}

/// Converts a linear RDP curve eps(alpha) = alpha * rho into an (eps, delta)
/// guarantee: min over alpha > 1 of alpha*rho + log(1/delta)/(alpha-1).
/// The minimizer alpha* = 1 + sqrt(log(1/delta)/rho) gives the closed form
/// rho + 2*sqrt(rho * log(1/delta)).
inline double rdp_to_dp(double rho_total, double delta) {
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw std::invalid_argument("rdp_to_dp: delta must lie in (0, 1)");
  }
  if (rho_total < 0.0) throw std::invalid_argument("rdp_to_dp: rho must be >= 0");
  if (rho_total == 0.0) return 0.0;
  const double l = std::log(1.0 / delta);
  return rho_total + 2.0 * std::sqrt(rho_total * l);
}

/// Pure-DP budget of the composed unit-vector + scalar randomizer.
inline double privunit_pure_eps(double eps0, double eps1, double eps2) {
  if (!(eps0 > 0.0) || !(eps1 > 0.0) || !(eps2 > 0.0)) {
    throw std::invalid_argument("privunit_pure_eps: budgets must be > 0");
  }
  return eps0 + eps1 + eps2;
}

enum class PrivacyRegime { kNone, kLdpGaussian, kLdpPrivunit, kCdp };

/// Accumulated privacy state. Rates are stored per round; totals multiply by
/// rounds_composed, which is exact for both the additive pure-DP composition
/// and the additive RDP composition used here.
struct PrivacyLedger {
  PrivacyRegime regime = PrivacyRegime::kNone;
  double rho = 0.0;       // per-round RDP rate of the vector mechanism
  double rho_xi = 0.0;    // per-round RDP rate of the scalar numerator noise
  double pure_eps = 0.0;  // per-round pure-DP budget (unit-vector regime)
  int rounds_composed = 0;
  double delta = 1e-5;

  double rho_total() const {
    return static_cast<double>(rounds_composed) * (rho + rho_xi);
  }

  double eps_per_round() const {
    switch (regime) {
      case PrivacyRegime::kNone:
        return std::numeric_limits<double>::infinity();
      case PrivacyRegime::kLdpPrivunit:
        return pure_eps;
      default:
        return rdp_to_dp(rho + rho_xi, delta);
    }
  }

  double eps_total() const {
    switch (regime) {
      case PrivacyRegime::kNone:
        return std::numeric_limits<double>::infinity();
      case PrivacyRegime::kLdpPrivunit:
        return static_cast<double>(rounds_composed) * pure_eps;
      default:
        return rdp_to_dp(rho_total(), delta);
    }
  }
};

}  // namespace dpfed
