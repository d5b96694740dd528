#pragma once

#include <functional>
#include <span>
#include <thread>
#include <vector>

namespace boltz {

// Pairwise tree reduction; result depends only on element order, so parallel
// producers that fill a preallocated buffer reproduce the serial sum exactly.
inline double pairwise_sum(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& xs) {
  return pairwise_sum(std::span<const double>(xs));
}

int worker_count();
void set_worker_count(int n);

// Runs fn(i) for i in [0, n). Partition is fixed, so writes into
// index-addressed buffers are identical for any worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace boltz
