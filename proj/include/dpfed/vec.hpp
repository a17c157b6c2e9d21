#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpfed/rng.hpp"

namespace dpfed {

/// Dense model/update vector. Immutable by convention once returned from an
/// operation; every vector in one experiment has the same fixed length.
using Vec = std::vector<double>;

inline void check_same_dim(const Vec& a, const Vec& b, const char* where) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(where) + ": dimension mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
}

inline double dot(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm_sq(const Vec& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

inline double l2_norm(const Vec& a) { return std::sqrt(l2_norm_sq(a)); }

inline bool all_finite(const Vec& a) {
  for (double v : a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

/// y += alpha * x
inline void add_scaled(Vec& y, double alpha, const Vec& x) {
  check_same_dim(y, x, "add_scaled");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

inline Vec scaled(const Vec& x, double alpha) {
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = alpha * x[i];
  return y;
}

inline Vec sub(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "sub");
  Vec r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

/// d iid N(0, std^2) coordinates. std = 0 gives the zero vector.
inline Vec sample_gaussian_vector(std::size_t d, double std, RngStream& rng) {
  if (std < 0.0) throw std::invalid_argument("sample_gaussian_vector: std < 0");
  Vec v(d, 0.0);
  if (std == 0.0) return v;
  for (std::size_t i = 0; i < d; ++i) v[i] = std * rng.normal();
  return v;
}

/// Uniform direction on the unit sphere (Gaussian-normalize construction).
inline Vec sample_unit_sphere(std::size_t d, RngStream& rng) {
  if (d == 0) throw std::invalid_argument("sample_unit_sphere: d = 0");
  for (;;) {
    Vec v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = rng.normal();
    const double n = l2_norm(v);
    if (n > 1e-100) {
      for (double& x : v) x /= n;
      return v;
    }
    // astronomically rare; redraw
  }
}

}  // namespace dpfed
