#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace uctrl {

// Thread cap from UCTRL_THREADS (0 or unset = auto). Read once.
inline int thread_cap() {
  static const int cap = [] {
    const char* env = std::getenv("UCTRL_THREADS");
    long v = env ? std::strtol(env, nullptr, 10) : 0;
    if (v <= 0) v = static_cast<long>(std::thread::hardware_concurrency());
    if (v <= 0) v = 1;
    return static_cast<int>(v);
  }();
  return cap;
}

// Runs fn(i) for i in [0, n). Each index writes only its own slot, and any
// reduction happens afterwards in index order, so results do not depend on
// the thread count.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
  int threads = std::min(thread_cap(), n);
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace uctrl
