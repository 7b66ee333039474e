#pragma once

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace sctrace {

inline unsigned& worker_cap() {
  static unsigned cap = 0;  // 0 = hardware concurrency
  return cap;
}

inline unsigned effective_workers() {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned cap = worker_cap();
  return cap == 0 ? hw : std::min(cap, hw);
}

/// Parallel map over [0, n) storing fn(i) into a result slot per index.
/// Work is pulled from a shared counter; results land in index order, so any
/// subsequent reduction is deterministic regardless of scheduling.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t n, Fn&& fn) {
  std::vector<T> out(n);
  const unsigned workers = std::min<std::size_t>(effective_workers(), n == 0 ? 1 : n);
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        out[i] = fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace sctrace
