#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include "dpfed/data.hpp"
#include "dpfed/errors.hpp"
#include "dpfed/vec.hpp"

namespace dpfed {

struct LocalTrainConfig {
  int local_steps = 1;     // tau
  double local_lr = 0.1;   // eta_l
  double clip_threshold = 1.0;  // C
};

inline void validate(const LocalTrainConfig& cfg) {
  if (cfg.local_steps < 1) throw config_error("client.local_steps must be >= 1");
  if (!(cfg.local_lr > 0.0)) throw config_error("client.local_lr must be > 0");
  if (!(cfg.clip_threshold > 0.0)) throw config_error("client.clip must be > 0");
}

/// tau deterministic full-gradient steps from w_global; returns the raw
/// (unclipped) update w^(tau) - w_global.
inline Vec local_update(const Vec& w_global, const ClientData& client,
                        const LocalTrainConfig& cfg, std::size_t client_index) {
  Vec w = w_global;
  for (int k = 1; k <= cfg.local_steps; ++k) {
    const Vec g = gradient(client, w);
    if (!all_finite(g)) {
      throw divergence_error("non-finite gradient at client " +
                             std::to_string(client_index) + ", local step " +
                             std::to_string(k));
    }
    add_scaled(w, -cfg.local_lr, g);
  }
  return sub(w, w_global);
}

/// min{C/||delta||, 1} * delta. Norm of the result never exceeds C.
inline Vec clip(const Vec& delta, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("clip: C must be > 0");
  const double n = l2_norm(delta);
  if (n <= threshold) return delta;
  return scaled(delta, threshold / n);
}

}  // namespace dpfed
