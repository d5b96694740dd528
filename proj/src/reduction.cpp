#include "boltz/reduction.hpp"

#include <algorithm>
#include <atomic>

namespace boltz {

namespace {
int g_workers = 1;
}

int worker_count() { return g_workers; }

void set_worker_count(int n) { g_workers = std::max(1, n); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const int workers = std::min<std::size_t>(g_workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  const std::size_t chunk = std::max<std::size_t>(1, n / (8 * workers));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        std::size_t begin = next.fetch_add(chunk);
        if (begin >= n) break;
        std::size_t end = std::min(n, begin + chunk);
        for (std::size_t i = begin; i < end; ++i) fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace boltz
