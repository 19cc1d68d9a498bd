#ifndef MMSLDL_PARALLEL_HPP
#define MMSLDL_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "mmsldl/types.hpp"

namespace mmsldl {

// Worker count: hardware concurrency capped by the MMSLDL_THREADS env var.
inline int worker_cap() {
  int workers = static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  if (const char* env = std::getenv("MMSLDL_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1 && cap < workers) workers = cap;
  }
  return workers;
}

namespace detail {
inline thread_local bool inside_parallel_region = false;
}

// Runs fn(i) for i in [0, n). Nested calls degrade to serial execution so
// worker counts stay bounded by MMSLDL_THREADS.
inline void parallel_for(Index n, const std::function<void(Index)>& fn) {
  if (n <= 0) return;
  const int workers = worker_cap();
  if (n == 1 || workers == 1 || detail::inside_parallel_region) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }

  std::atomic<Index> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    detail::inside_parallel_region = true;
    for (;;) {
      const Index i = next.fetch_add(1);
      if (i >= n) break;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
    detail::inside_parallel_region = false;
  };

  std::vector<std::thread> pool;
  const int spawn = static_cast<int>(std::min<Index>(workers, n));
  pool.reserve(static_cast<std::size_t>(spawn));
  for (int t = 0; t < spawn; ++t) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace mmsldl

#endif
