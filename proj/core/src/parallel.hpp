#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace moestress::detail {

// Runs fn(i) for every i in [0, n) across worker threads (num_threads <= 0
// picks the hardware count). Each index writes only its own slot in
// caller-owned storage, so the thread count never changes results; callers
// do any order-sensitive reduction afterwards, in index order.
inline void parallel_for(int n, int num_threads,
                         const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int workers = num_threads > 0
                    ? num_threads
                    : static_cast<int>(std::thread::hardware_concurrency());
  if (workers <= 0) workers = 4;
  workers = std::min(workers, n);
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int chunk = (n + workers - 1) / workers;
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      const int begin = w * chunk;
      const int end = std::min(n, begin + chunk);
      try {
        for (int i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace moestress::detail
