#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "dpfed/rng.hpp"
#include "dpfed/vec.hpp"

namespace dpfed {

/// One rank-one least-squares client: f(w) = (x^T w - y)^2.
/// Targets are noiseless (y = x^T w* at generation), so all clients share
/// the minimizer w*.
struct RegressionClient {
  Vec x;
  double y = 0.0;
};

/// Labeled feature set for a linear softmax model. The model vector has
/// length num_classes * feature dim, stored row-major by class.
struct ClassificationClient {
  std::vector<Vec> features;
  std::vector<int> labels;
  int num_classes = 0;
};

using ClientData = std::variant<RegressionClient, ClassificationClient>;

struct FederatedDataset {
  std::size_t feature_dim = 0;
  std::vector<ClientData> clients;
  std::optional<Vec> optimum;  // w*, regression only

  std::size_t model_dim() const {
    if (clients.empty()) return feature_dim;
    if (const auto* c = std::get_if<ClassificationClient>(&clients.front())) {
      return feature_dim * static_cast<std::size_t>(c->num_classes);
    }
    return feature_dim;
  }
};

/// Heterogeneous noiseless regression: w* ~ N(0, I); per client
/// u_i ~ N(0, 0.1), m_i ~ N(u_i, 1), x_i coords iid N(m_i, 1), y_i = x_i^T w*.
/// Second parameters of N(.,.) are variances.
inline FederatedDataset generate_synthetic_regression(std::size_t num_clients,
                                                      std::size_t d,
                                                      RngStream& rng) {
  if (num_clients == 0 || d == 0) {
    throw std::invalid_argument("generate_synthetic_regression: M, d must be >= 1");
  }
  FederatedDataset ds;
  ds.feature_dim = d;
  Vec w_star(d);
  for (auto& v : w_star) v = rng.normal();
  const double u_std = std::sqrt(0.1);
  ds.clients.reserve(num_clients);
  for (std::size_t i = 0; i < num_clients; ++i) {
    const double u = u_std * rng.normal();
    const double m = u + rng.normal();
    RegressionClient c;
    c.x.resize(d);
    for (auto& v : c.x) v = m + rng.normal();
    c.y = dot(c.x, w_star);
    ds.clients.emplace_back(std::move(c));
  }
  ds.optimum = std::move(w_star);
  return ds;
}

/// Dirichlet-heterogeneous Gaussian-blob classification. Each client draws
/// class proportions from Dirichlet(alpha * 1_K), then samples points as
/// class mean + N(0, I).
inline FederatedDataset generate_synthetic_classification(
    std::size_t num_clients, std::size_t d, int num_classes,
    int samples_per_client, double dirichlet_alpha, RngStream& rng) {
  if (num_clients == 0 || d == 0 || samples_per_client < 1) {
    throw std::invalid_argument("generate_synthetic_classification: bad sizes");
  }
  if (num_classes < 2) {
    throw std::invalid_argument("generate_synthetic_classification: K must be >= 2");
  }
  if (!(dirichlet_alpha > 0.0)) {
    throw std::invalid_argument("generate_synthetic_classification: alpha must be > 0");
  }
  FederatedDataset ds;
  ds.feature_dim = d;
  std::vector<Vec> means(num_classes);
  for (auto& mu : means) {
    mu.resize(d);
    for (auto& v : mu) v = rng.normal();
  }
  ds.clients.reserve(num_clients);
  for (std::size_t i = 0; i < num_clients; ++i) {
    std::vector<double> pi(num_classes);
    double total = 0.0;
    for (auto& g : pi) {
      g = rng.gamma(dirichlet_alpha);
      total += g;
    }
    for (auto& g : pi) g /= total;

    ClassificationClient c;
    c.num_classes = num_classes;
    c.features.reserve(samples_per_client);
    c.labels.reserve(samples_per_client);
    for (int s = 0; s < samples_per_client; ++s) {
      const double u = rng.uniform01();
      int cls = num_classes - 1;
      double acc = 0.0;
      for (int k = 0; k < num_classes; ++k) {
        acc += pi[k];
        if (u < acc) {
          cls = k;
          break;
        }
      }
      Vec f(d);
      for (std::size_t j = 0; j < d; ++j) f[j] = means[cls][j] + rng.normal();
      c.features.emplace_back(std::move(f));
      c.labels.push_back(cls);
    }
    ds.clients.emplace_back(std::move(c));
  }
  return ds;
}

namespace detail {

inline void check_classification_dims(const ClassificationClient& c, const Vec& w) {
  if (c.features.empty()) {
    throw std::invalid_argument("classification client has no samples");
  }
  const std::size_t d = c.features.front().size();
  if (w.size() != d * static_cast<std::size_t>(c.num_classes)) {
    throw std::invalid_argument("loss/gradient: model size does not match K*d");
  }
}

}  // namespace detail

inline double loss(const RegressionClient& c, const Vec& w) {
  const double r = dot(c.x, w) - c.y;
  return r * r;
}

inline Vec gradient(const RegressionClient& c, const Vec& w) {
  const double r = dot(c.x, w) - c.y;
  return scaled(c.x, 2.0 * r);
}

inline double loss(const ClassificationClient& c, const Vec& w) {
  detail::check_classification_dims(c, w);
  const std::size_t d = c.features.front().size();
  const int k = c.num_classes;
  double total = 0.0;
  std::vector<double> logits(k);
  for (std::size_t s = 0; s < c.features.size(); ++s) {
    const Vec& x = c.features[s];
    double zmax = -std::numeric_limits<double>::infinity();
    for (int cc = 0; cc < k; ++cc) {
      double z = 0.0;
      for (std::size_t j = 0; j < d; ++j) z += w[cc * d + j] * x[j];
      logits[cc] = z;
      zmax = std::max(zmax, z);
    }
    double lse = 0.0;
    for (int cc = 0; cc < k; ++cc) lse += std::exp(logits[cc] - zmax);
    lse = zmax + std::log(lse);
    total += lse - logits[c.labels[s]];
  }
  return total / static_cast<double>(c.features.size());
}

inline Vec gradient(const ClassificationClient& c, const Vec& w) {
  detail::check_classification_dims(c, w);
  const std::size_t d = c.features.front().size();
  const int k = c.num_classes;
  Vec g(w.size(), 0.0);
  std::vector<double> logits(k);
  for (std::size_t s = 0; s < c.features.size(); ++s) {
    const Vec& x = c.features[s];
    double zmax = -std::numeric_limits<double>::infinity();
    for (int cc = 0; cc < k; ++cc) {
      double z = 0.0;
      for (std::size_t j = 0; j < d; ++j) z += w[cc * d + j] * x[j];
      logits[cc] = z;
      zmax = std::max(zmax, z);
    }
    double norm = 0.0;
    for (int cc = 0; cc < k; ++cc) {
      logits[cc] = std::exp(logits[cc] - zmax);
      norm += logits[cc];
    }
    for (int cc = 0; cc < k; ++cc) {
      const double coef = logits[cc] / norm - (cc == c.labels[s] ? 1.0 : 0.0);
      for (std::size_t j = 0; j < d; ++j) g[cc * d + j] += coef * x[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(c.features.size());
  for (auto& v : g) v *= inv;
  return g;
}

inline double loss(const ClientData& c, const Vec& w) {
  return std::visit([&](const auto& cc) { return loss(cc, w); }, c);
}

inline Vec gradient(const ClientData& c, const Vec& w) {
  return std::visit([&](const auto& cc) { return gradient(cc, w); }, c);
}

}  // namespace dpfed
