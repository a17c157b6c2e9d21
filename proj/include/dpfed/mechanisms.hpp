#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "dpfed/errors.hpp"
#include "dpfed/rng.hpp"
#include "dpfed/special.hpp"
#include "dpfed/vec.hpp"

namespace dpfed {

/// Local Gaussian randomizer: c = delta + N(0, sigma^2 I).
struct GaussianLocalConfig {
  double sigma = 0.0;
};

/// Central (trusted-server) noise scales: the aggregate receives
/// N(0, sigma^2/M I) and the step-size numerator receives N(0, sigma_xi^2).
struct CdpNoiseConfig {
  double sigma = 0.0;
  double sigma_xi = 0.0;
};

/// Everything the unit-vector randomizer and its scalar companion need,
/// precomputed once per experiment.
///
/// The cap height gamma uses the closed-form branch
///   gamma = tanh(eps1/2) * sqrt(pi / (2(d-1)))
/// capped just below 1; the alternative large-eps1 selection rule is not
/// implemented and parameter regimes requiring it are rejected up front
/// (m would come out nonpositive).
struct PrivUnitConfig {
  std::size_t dim = 0;
  double eps0 = 0.0, eps1 = 0.0, eps2 = 0.0;
  double clip_threshold = 0.0;  // r_max of the scalar mechanism

  // direction randomizer
  double p = 0.0;           // probability of sampling inside the cap
  double gamma = 0.0;       // cap height: cap is {v : <v,u> >= gamma}
  double alpha_beta = 0.0;  // (d-1)/2
  double tau_beta = 0.0;    // (1+gamma)/2 in s = (1+t)/2 coordinates
  double cap_mass = 0.0;    // P(t >= gamma) under the cap-free density
  double m = 0.0;           // output norm is exactly 1/m

  // scalar randomizer
  long k = 0;
  double a = 0.0, b = 0.0;

  // norm-estimation debiasing constants
  double c1 = 0.0, c2 = 0.0, c3 = 0.0;
};

/// Derives all PrivUnit/ScalarDP constants for dimension d and budgets
/// (eps0, eps1, eps2) at clipping threshold C. Throws config_error when the
/// budget is too small for this dimension (m <= 0 or non-finite) or when
/// the scalar mechanism's sign recovery would be ill-posed (2b integral).
inline PrivUnitConfig make_privunit_config(std::size_t d, double eps0, double eps1,
                                           double eps2, double clip_threshold) {
  if (d < 2) throw config_error("privunit: dimension must be >= 2");
  if (!(eps0 > 0.0)) throw config_error("privunit: eps0 must be > 0");
  if (!(eps1 > 0.0) || eps1 > static_cast<double>(d)) {
    throw config_error("privunit: eps1 must lie in (0, d]");
  }
  if (!(eps2 > 0.0)) throw config_error("privunit: eps2 must be > 0");
  if (!(clip_threshold > 0.0)) throw config_error("privunit: clip threshold must be > 0");

  PrivUnitConfig cfg;
  cfg.dim = d;
  cfg.eps0 = eps0;
  cfg.eps1 = eps1;
  cfg.eps2 = eps2;
  cfg.clip_threshold = clip_threshold;

  cfg.p = 1.0 / (1.0 + std::exp(-eps0));
  const double dd = static_cast<double>(d);
  cfg.gamma = std::tanh(eps1 / 2.0) * std::sqrt(3.14159265358979323846 / (2.0 * (dd - 1.0)));
  cfg.gamma = std::min(cfg.gamma, 1.0 - 1e-9);
  cfg.alpha_beta = 0.5 * (dd - 1.0);
  cfg.tau_beta = 0.5 * (1.0 + cfg.gamma);

  // Normalizer m = E[<V,u>]; evaluated in log space because (1-gamma^2)^alpha,
  // 2^{d-2} and B(alpha,alpha) individually overflow or underflow for large d.
  // With q = P(t >= gamma) the bracketed term of the definition reduces to
  // (p - q) / (q (1 - q)) after factoring out 1/B(alpha,alpha).
  const double q = reg_inc_beta(0.5 * (1.0 - cfg.gamma), cfg.alpha_beta, cfg.alpha_beta);
  cfg.cap_mass = q;
  if (!(q > 0.0) || !(q < 1.0) || !(cfg.p > q)) {
    throw config_error("privunit: cap probability degenerate for d=" + std::to_string(d));
  }
  const double log_m = cfg.alpha_beta * std::log1p(-cfg.gamma * cfg.gamma) -
                       (dd - 2.0) * std::log(2.0) - std::log(dd - 1.0) -
                       log_beta(cfg.alpha_beta, cfg.alpha_beta) +
                       std::log(cfg.p - q) - std::log(q) - std::log1p(-q);
  cfg.m = std::exp(log_m);
  if (!std::isfinite(cfg.m) || !(cfg.m > 0.0)) {
    throw config_error("privunit: normalizer m is not positive/finite; privacy budget too small for d=" +
                       std::to_string(d));
  }

  const double e2 = std::exp(eps2);
  const double k_real = std::ceil(std::exp(eps2 / 3.0));
  if (!(k_real < 9.0e15)) throw config_error("privunit: eps2 too large (k overflows)");
  cfg.k = static_cast<long>(k_real);
  const double k = k_real;
  cfg.a = (e2 + k) / (e2 - 1.0) * clip_threshold / k;
  cfg.b = k * (k + 1.0) / (2.0 * (e2 + k));
  const double two_b = 2.0 * cfg.b;
  if (std::fabs(two_b - std::round(two_b)) < 1e-9) {
    throw config_error("privunit: k(k+1)/(e^eps2 + k) is (nearly) integral; "
                       "sign recovery ill-posed, perturb eps2");
  }

  const double cc = clip_threshold;
  cfg.c1 = (k + 1.0) / (e2 - 1.0);
  cfg.c2 = -cfg.c1 * cc;
  cfg.c3 = (cfg.c1 + 1.0) * cc * cc / (4.0 * k * k) +
           cfg.c1 * cc * cc *
               ((2.0 * k + 1.0) * (e2 + k) / (6.0 * k * (e2 - 1.0)) -
                (k + 1.0) / (4.0 * (e2 - 1.0)));
  return cfg;
}

/// Samples t = <V, u> for V uniform on the spherical cap {<v,u> >= gamma}
/// (above) or its complement (below). The marginal density of t is
/// proportional to (1-t^2)^{(d-3)/2}; in s = (1+t)/2 coordinates that is
/// Beta((d-1)/2, (d-1)/2), so a truncated draw is one inverse-CDF lookup.
inline double sample_cap_component(double gamma, std::size_t d, bool above,
                                   RngStream& rng) {
  if (d < 2) throw std::invalid_argument("sample_cap_component: d must be >= 2");
  if (!(gamma > -1.0) || !(gamma < 1.0)) {
    throw std::invalid_argument("sample_cap_component: gamma outside (-1, 1)");
  }
  const double alpha = 0.5 * (static_cast<double>(d) - 1.0);
  const double s_tau = 0.5 * (1.0 + gamma);
  const double below_mass = reg_inc_beta(s_tau, alpha, alpha);
  const double u = rng.uniform01();
  const double target = above ? below_mass + u * (1.0 - below_mass) : u * below_mass;
  const double s = inv_reg_inc_beta(target, alpha, alpha);
  double t = 2.0 * s - 1.0;
  if (above) {
    t = std::min(std::max(t, gamma), 1.0);
  } else {
    t = std::min(std::max(t, -1.0), std::nextafter(gamma, -1.0));
  }
  return t;
}

/// Unit-vector randomizer: returns Z with ||Z|| = 1/m and E[Z] = u.
/// With probability p the direction is uniform on the cap around u,
/// otherwise uniform on the complement.
inline Vec privunit(const Vec& u, const PrivUnitConfig& cfg, RngStream& rng) {
  if (u.size() != cfg.dim) throw std::invalid_argument("privunit: dimension mismatch");
  const double n = l2_norm(u);
  if (std::fabs(n - 1.0) > 1e-9) {
    throw std::invalid_argument("privunit: input must be unit norm");
  }
  const Vec unit = scaled(u, 1.0 / n);

  const bool above = rng.bernoulli(cfg.p);
  const double t = sample_cap_component(cfg.gamma, cfg.dim, above, rng);

  // Uniform direction in the orthogonal complement of u.
  Vec w(cfg.dim);
  for (;;) {
    for (auto& v : w) v = rng.normal();
    const double proj = dot(w, unit);
    add_scaled(w, -proj, unit);
    const double wn = l2_norm(w);
    if (wn > 1e-12) {
      for (auto& v : w) v /= wn;
      break;
    }
  }

  Vec out = scaled(unit, t);
  add_scaled(out, std::sqrt(std::max(0.0, 1.0 - t * t)), w);
  const double on = l2_norm(out);
  for (auto& v : out) v /= on * cfg.m;
  return out;
}

/// Scalar randomizer for r in [0, r_max]: lattice rounding to {0..k},
/// randomized response, affine debiasing. E[result] = r; the output takes
/// one of the k+1 values a(j - b).
inline double scalardp(double r, const PrivUnitConfig& cfg, RngStream& rng) {
  const double r_max = cfg.clip_threshold;
  if (!(r >= 0.0) || r > r_max * (1.0 + 1e-12)) {
    throw std::invalid_argument("scalardp: r outside [0, r_max]");
  }
  r = std::min(r, r_max);
  const double val = static_cast<double>(cfg.k) * r / r_max;
  const double fl = std::floor(val);
  const double ce = std::ceil(val);
  long j;
  if (fl == ce) {
    j = static_cast<long>(fl);
  } else {
    j = rng.uniform01() < (ce - val) ? static_cast<long>(fl) : static_cast<long>(ce);
  }
  const double e2 = std::exp(cfg.eps2);
  long j_hat;
  if (rng.uniform01() < e2 / (e2 + static_cast<double>(cfg.k))) {
    j_hat = j;
  } else {
    long i = static_cast<long>(rng.uniform_int(static_cast<std::uint64_t>(cfg.k)));
    if (i >= j) ++i;
    j_hat = i;
  }
  return cfg.a * (static_cast<double>(j_hat) - cfg.b);
}

struct PrivUnitOutput {
  Vec c;           // released vector r_hat * z
  double r_hat;    // scalar randomizer output
  Vec z;           // direction randomizer output, ||z|| = 1/m
};

/// Full vector randomizer: privatizes direction and magnitude separately
/// and releases their product. E[c] = delta for ||delta|| <= C. A zero
/// update keeps a uniformly random direction so the estimator stays
/// unbiased without special cases downstream.
inline PrivUnitOutput privunit_randomize_detail(const Vec& delta,
                                                const PrivUnitConfig& cfg,
                                                RngStream& rng) {
  if (delta.size() != cfg.dim) {
    throw std::invalid_argument("privunit_randomize: dimension mismatch");
  }
  double r = l2_norm(delta);
  if (r > cfg.clip_threshold + 1e-9) {
    throw std::invalid_argument("privunit_randomize: ||delta|| exceeds clip threshold; clip first");
  }
  r = std::min(r, cfg.clip_threshold);

  PrivUnitOutput out;
  if (r == 0.0) {
    out.z = sample_unit_sphere(cfg.dim, rng);
    for (auto& v : out.z) v /= cfg.m;
  } else {
    out.z = privunit(scaled(delta, 1.0 / r), cfg, rng);
  }
  out.r_hat = scalardp(r, cfg, rng);
  out.c = scaled(out.z, out.r_hat);
  return out;
}

inline Vec privunit_randomize(const Vec& delta, const PrivUnitConfig& cfg,
                              RngStream& rng) {
  return privunit_randomize_detail(delta, cfg, rng).c;
}

/// Recovers the scalar randomizer's output from a released vector.
/// ||c|| fixes the magnitude; the sign is identified by which of +/- maps
/// onto the output lattice (k(k+1)/(e^eps2+k) non-integral makes this
/// unambiguous). Reconstructing from the lattice index makes the result
/// bit-identical to what the randomizer produced.
inline double recover_scalar(const Vec& c, const PrivUnitConfig& cfg) {
  constexpr double kIntegralityTol = 1e-6;
  const double r_tilde = cfg.m * l2_norm(c);
  const double j_plus = r_tilde / cfg.a + cfg.b;
  const double j_minus = -r_tilde / cfg.a + cfg.b;

  const auto candidate = [&](double j) -> std::pair<bool, long> {
    const double rounded = std::round(j);
    if (std::fabs(j - rounded) > kIntegralityTol) return {false, 0};
    if (rounded < 0.0 || rounded > static_cast<double>(cfg.k)) return {false, 0};
    return {true, static_cast<long>(rounded)};
  };
  const auto [ok_plus, jp] = candidate(j_plus);
  const auto [ok_minus, jm] = candidate(j_minus);
  long j_hat;
  if (ok_plus && ok_minus) {
    // Both within tolerance can only happen when 2b is unusually close to an
    // integer; the true branch sits at floating-point distance, the other at
    // the distance of 2b from the lattice.
    const double dp = std::fabs(j_plus - std::round(j_plus));
    const double dm = std::fabs(j_minus - std::round(j_minus));
    if (dp == dm) throw corruption_error("norm estimation: ambiguous sign recovery");
    j_hat = dp < dm ? jp : jm;
  } else if (ok_plus) {
    j_hat = jp;
  } else if (ok_minus) {
    j_hat = jm;
  } else {
    throw corruption_error("norm estimation: vector is not a valid randomizer output");
  }
  return cfg.a * (static_cast<double>(j_hat) - cfg.b);
}

/// Debiased estimate of ||delta||^2 from a released vector (Alg. of the
/// server-side norm path). E[result] <= r^2; may be negative for small r,
/// deliberately not clamped here.
inline double estimate_norm_squared(const Vec& c, const PrivUnitConfig& cfg) {
  const double r_hat = recover_scalar(c, cfg);
  return (r_hat * r_hat - cfg.c2 * r_hat - cfg.c3) / (1.0 + cfg.c1);
}

inline Vec gaussian_local_randomize(const Vec& delta, const GaussianLocalConfig& cfg,
                                    RngStream& rng) {
  if (cfg.sigma < 0.0) throw std::invalid_argument("gaussian randomizer: sigma < 0");
  Vec c = delta;
  for (auto& v : c) v += cfg.sigma * rng.normal();
  return c;
}

/// Central aggregate noise: d coords iid N(0, sigma^2 / M).
inline Vec central_gaussian_noise(std::size_t d, const CdpNoiseConfig& cfg,
                                  std::size_t num_clients, RngStream& rng) {
  if (num_clients == 0) throw std::invalid_argument("central noise: M must be >= 1");
  const double std_dev = cfg.sigma / std::sqrt(static_cast<double>(num_clients));
  return sample_gaussian_vector(d, std_dev, rng);
}

}  // namespace dpfed
