#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dpfed {

/// log B(a, b) = log Γ(a) + log Γ(b) - log Γ(a+b), a, b > 0.
/// Evaluated in extended precision: the lgamma terms reach ~1e5 while the
/// result can be small, so double-rounding each term costs ~1e-11 absolute.
inline double log_beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("log_beta: parameters must be positive");
  }
  const long double r = std::lgamma(static_cast<long double>(a)) +
                        std::lgamma(static_cast<long double>(b)) -
                        std::lgamma(static_cast<long double>(a) + static_cast<long double>(b));
  return static_cast<double>(r);
}

namespace detail {

// Lentz continued fraction for the regularized incomplete beta function.
// Converges for x < (a+1)/(a+b+2); callers use the symmetry otherwise.
inline double beta_cont_frac(double a, double b, double x) {
  constexpr int kMaxIter = 50000;
  constexpr double kEps = 3e-17;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= kEps) break;
  }
  return h;
}

inline void check_beta_args(double x, double a, double b, const char* where) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument(std::string(where) + ": parameters must be positive");
  }
  if (!(x >= 0.0) || !(x <= 1.0)) {
    throw std::invalid_argument(std::string(where) + ": x outside [0, 1]");
  }
}

// log of the prefactor x^a (1-x)^b / B(a, b) in extended precision.
inline long double log_beta_prefactor(double x, double a, double b) {
  const long double la = static_cast<long double>(a);
  const long double lb = static_cast<long double>(b);
  return std::lgamma(la + lb) - std::lgamma(la) - std::lgamma(lb) +
         la * std::log(static_cast<long double>(x)) +
         lb * std::log1p(-static_cast<long double>(x));
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) in [0, 1].
inline double reg_inc_beta(double x, double a, double b) {
  detail::check_beta_args(x, a, b, "reg_inc_beta");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const long double ln_pre = detail::log_beta_prefactor(x, a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return static_cast<double>(std::exp(ln_pre) * detail::beta_cont_frac(a, b, x) / a);
  }
  return static_cast<double>(1.0L - std::exp(ln_pre) * detail::beta_cont_frac(b, a, 1.0 - x) / b);
}

/// log I_x(a, b). Evaluates the small tail directly so it stays accurate
/// where I_x underflows a plain double.
inline double log_reg_inc_beta(double x, double a, double b) {
  detail::check_beta_args(x, a, b, "log_reg_inc_beta");
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  if (x == 1.0) return 0.0;
  const long double ln_pre = detail::log_beta_prefactor(x, a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return static_cast<double>(
        ln_pre + std::log(static_cast<long double>(detail::beta_cont_frac(a, b, x)) / a));
  }
  const long double upper = std::exp(ln_pre) * detail::beta_cont_frac(b, a, 1.0 - x) / b;
  return static_cast<double>(std::log1p(-upper));
}

/// Unregularized incomplete beta B(x; a, b) = ∫_0^x t^{a-1}(1-t)^{b-1} dt.
/// B(1; a, b) equals the complete beta function. Underflows to 0 when the
/// true value is below the double range; use log_incomplete_beta there.
inline double incomplete_beta(double x, double a, double b) {
  detail::check_beta_args(x, a, b, "incomplete_beta");
  if (x == 0.0) return 0.0;
  return std::exp(log_beta(a, b) + log_reg_inc_beta(x, a, b));
}

/// log B(x; a, b).
inline double log_incomplete_beta(double x, double a, double b) {
  detail::check_beta_args(x, a, b, "log_incomplete_beta");
  if (x == 0.0) return -std::numeric_limits<double>::infinity();
  return log_beta(a, b) + log_reg_inc_beta(x, a, b);
}

namespace detail {

// Acklam's rational approximation to the standard normal quantile.
// Only used to seed Newton iterations; ~1e-9 relative accuracy.
inline double inv_normal_cdf(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  if (p <= 0.0) return -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return std::numeric_limits<double>::infinity();
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  const double q = std::sqrt(-2.0 * std::log1p(-p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

}  // namespace detail

/// Inverse of the regularized incomplete beta: returns x with I_x(a, b) = p.
/// Bracketed Newton; the bracket guarantees convergence for any a, b > 0.
inline double inv_reg_inc_beta(double p, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("inv_reg_inc_beta: parameters must be positive");
  }
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;

  // Solve in the lower tail for conditioning; mirror back at the end.
  bool mirrored = false;
  if (p > 0.5) {
    p = 1.0 - p;
    std::swap(a, b);
    mirrored = true;
  }

  const double mean = a / (a + b);
  const double var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
  double x = mean + detail::inv_normal_cdf(p) * std::sqrt(var);
  if (!(x > 0.0) || !(x < 1.0)) x = mean * p;  // crude but inside (0, 1)
  if (!(x > 0.0) || !(x < 1.0)) x = 0.5;

  const double lb = log_beta(a, b);
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double f = reg_inc_beta(x, a, b) - p;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    if (std::fabs(f) <= 1e-15 * p || hi - lo <= 1e-17 * std::max(1e-10, lo)) break;
    const double log_pdf = (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - lb;
    double next = x - f * std::exp(-log_pdf);
    if (!(next > lo) || !(next < hi) || !std::isfinite(next)) {
      next = 0.5 * (lo + hi);
    }
    if (next == x) break;
    x = next;
  }
  return mirrored ? 1.0 - x : x;
}

}  // namespace dpfed
