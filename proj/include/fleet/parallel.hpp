#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace fleet {

/// Worker count: explicit request, else FLEET_THREADS, else hardware.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FLEET_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Static block partition; results must be written to disjoint slots so the
/// outcome is schedule independent.
inline void parallel_for(int n, int threads, const std::function<void(int)>& body) {
  threads = std::min(resolve_threads(threads), n);
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([=, &body] {
      for (int i = w; i < n; i += threads) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace fleet
