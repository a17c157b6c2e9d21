#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dpfed {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ (v + 0x9e3779b97f4a7c15ULL));
}

}  // namespace detail

/// Seeded random stream with tree-structured derivation.
///
/// Streams are identified by the path of `child(a, b)` tags from the master
/// seed, so a stream for (round, client) is independent of execution order
/// and of how many draws sibling streams consumed. All primitives are built
/// on std::mt19937_64 plus in-house transforms, so a given (seed, path)
/// yields the same sequence on every run of the same binary.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed)
      : key_(detail::splitmix64(seed)), engine_(key_) {}

  /// Derive an independent stream; does not consume state from this one.
  RngStream child(std::uint64_t a, std::uint64_t b = 0) const {
    std::uint64_t k = detail::hash_combine(key_, a);
    k = detail::hash_combine(k, b);
    return RngStream(k, 0);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1]; safe as a log() argument.
  double uniform01_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the paired draw is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01_open();
    const double u2 = uniform01();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * 3.14159265358979323846 * u2;
    spare_ = mag * std::sin(ang);
    has_spare_ = true;
    return mag * std::cos(ang);
  }

  /// Uniform integer in [0, n), n >= 1. Rejection keeps it exactly uniform.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Gamma(shape, 1) via Marsaglia-Tsang, with the usual boost for shape < 1.
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform01_open();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01_open();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return d * v;
      }
    }
  }

 private:
  RngStream(std::uint64_t key, int) : key_(key), engine_(key) {}

  std::uint64_t key_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Fixed tags for top-level stream derivation.
namespace stream_tag {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kClient = 2;
inline constexpr std::uint64_t kServer = 3;
inline constexpr std::uint64_t kStudy = 4;
inline constexpr std::uint64_t kInit = 5;
}  // namespace stream_tag

}  // namespace dpfed
