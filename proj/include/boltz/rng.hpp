#pragma once

#include <cmath>
#include <cstdint>

#include "boltz/vec.hpp"

namespace boltz {

// Counter-based generator: sample i of stream s is a pure function of
// (seed, s, i), so results do not depend on how work is split over threads.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
}

class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : key_(mix_key(seed, stream)) {}

  // Uniform in (0, 1).
  double uniform() {
    std::uint64_t bits = splitmix64(key_ ^ (counter_++ * 0xda942042e4dd58b5ULL));
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double phi = 2.0 * M_PI * u2;
    cached_ = r * std::sin(phi);
    have_cached_ = true;
    return r * std::cos(phi);
  }

  Vec normal_vec(int n, double mean_scale = 0.0, const Vec* mean = nullptr,
                 double sigma = 1.0) {
    Vec v(n);
    for (int i = 0; i < n; ++i) {
      v[i] = sigma * normal();
      if (mean) v[i] += mean_scale * (*mean)[i];
    }
    return v;
  }

  // Uniform direction on S^{n-1} in R^n.
  Vec unit_vec(int n) {
    while (true) {
      Vec v = normal_vec(n);
      double r = norm(v);
      if (r > 1e-12) return (1.0 / r) * v;
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace boltz
