#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace flowcut {

// Worker count: FLOWCUT_THREADS caps it, hardware concurrency is the default.
inline int worker_count() {
  unsigned hw = std::thread::hardware_concurrency();
  int n = hw == 0 ? 1 : static_cast<int>(hw);
  if (const char* env = std::getenv("FLOWCUT_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1 && cap < n) n = cap;
  }
  return n;
}

// Runs fn(i) for i in [0, count) across workers. Each index is handled by a
// fixed worker (strided), so per-index results are deterministic; exceptions
// are rethrown on the calling thread.
inline void parallel_for(int count, const std::function<void(int)>& fn) {
  int workers = std::min(worker_count(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (int i = t; i < count; i += workers) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace flowcut
