#pragma once

#include <atomic>
#include <thread>
#include <vector>

namespace minimark {

/// Index-parallel loop; every iteration writes only its own slot, so results
/// are identical for any thread count.
template <typename F>
void parallel_for(int n, int threads, F&& f) {
  if (threads < 2 || n < 2) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  threads = std::min(threads, n);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n) break;
        f(i);
      }
    });
  for (auto& th : pool) th.join();
}

}  // namespace minimark
