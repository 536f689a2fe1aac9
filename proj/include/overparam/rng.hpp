#pragma once

#include "overparam/common.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace overparam {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// SGD sample index for step `step`. The stream is a pure function of
/// (seed, step): unbiased draws on {0..n-1} by Lemire's multiply-and-reject,
/// where the k-th candidate is splitmix64 of a (seed, step, k) counter.
inline Index sgd_index(std::uint64_t seed, std::uint64_t step, Index n) {
  require(n >= 1, "sgd_index: n must be positive");
  const auto range = static_cast<std::uint64_t>(n);
  const std::uint64_t base = splitmix64(seed) ^ splitmix64(step * 0xD1B54A32D192ED03ULL + 1);
  const std::uint64_t threshold = (0 - range) % range;
  for (std::uint64_t k = 0;; ++k) {
    const std::uint64_t x = splitmix64(base + k);
    const unsigned __int128 m = static_cast<unsigned __int128>(x) * range;
    if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<Index>(m >> 64);
  }
}

/// Seeded generator for data, initializations and probes. Uniform and normal
/// draws are derived by hand from mt19937_64 so streams are identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

  double rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }

  Vector normal_vector(Index n) {
    Vector out(n);
    for (Index i = 0; i < n; ++i) out[i] = normal();
    return out;
  }

  Matrix normal_matrix(Index rows, Index cols) {
    Matrix out(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) out(i, j) = normal();
    return out;
  }

  /// Uniform point in the Euclidean ball: normalized Gaussian direction
  /// scaled by radius * U^(1/p).
  Vector in_ball(const Vector& center, double radius) {
    const Index p = center.size();
    Vector dir = normal_vector(p);
    const double norm = dir.norm();
    if (norm == 0.0) return center;
    const double scale = radius * std::pow(uniform(), 1.0 / static_cast<double>(p));
    return center + dir * (scale / norm);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Uniform direction on the unit sphere.
inline Vector random_unit_vector(Rng& rng, Index k) {
  Vector v = rng.normal_vector(k);
  return v / v.norm();
}

}  // namespace overparam
