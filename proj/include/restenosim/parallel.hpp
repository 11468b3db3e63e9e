#pragma once

// Element-parallel helper. Thread count is capped by RESTENOSIM_THREADS;
// results are produced into per-index slots so reductions stay deterministic.

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace restenosim {

inline int thread_count() {
  unsigned n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  if (const char* env = std::getenv("RESTENOSIM_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return static_cast<int>(n);
}

template <class Fn>
void parallel_for(int n, Fn&& fn) {
  const int nt = std::min(thread_count(), std::max(n, 1));
  if (nt <= 1 || n < 64) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  const int chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    const int lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([&fn, lo, hi] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace restenosim
