#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace conflow {

// Thread cap from CONFLOW_THREADS (hardware concurrency by default).
inline unsigned parallel_thread_count() {
  if (const char* env = std::getenv("CONFLOW_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? hc : 1;
}

// Data-parallel index loop. Work items must be independent; results keyed by
// index so output is identical for any thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  unsigned threads = parallel_thread_count();
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  unsigned use = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  pool.reserve(use);
  for (unsigned t = 0; t < use; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= n) break;
        body(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace conflow
