#pragma once

#include <stdexcept>
#include <string>

namespace dpfed {

// Invalid or mutually inconsistent configuration (bad mechanism budgets,
// malformed config files, incompatible algorithm/mechanism pairs).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values encountered during local training.
struct divergence_error : std::runtime_error {
  explicit divergence_error(const std::string& what) : std::runtime_error(what) {}
};

// An aggregated update with zero norm under a ratio step-size rule.
struct degenerate_round_error : std::runtime_error {
  explicit degenerate_round_error(const std::string& what) : std::runtime_error(what) {}
};

// A privatized vector that cannot have been produced by the configured
// randomizer (sign recovery failed in norm estimation).
struct corruption_error : std::runtime_error {
  explicit corruption_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dpfed
