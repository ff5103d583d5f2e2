#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ttmfg {

namespace detail {
inline std::atomic<int>& worker_count_storage() {
  static std::atomic<int> count{[] {
    if (const char* env = std::getenv("TTMFG_THREADS")) {
      try {
        const int n = std::stoi(env);
        if (n > 0) return n;
      } catch (...) {
      }
    }
    return 1;
  }()};
  return count;
}
}  // namespace detail

/// Number of workers used for batched point evaluations. Defaults to the
/// TTMFG_THREADS environment variable, or 1.
inline int worker_count() { return detail::worker_count_storage().load(); }

inline void set_worker_count(int n) { detail::worker_count_storage().store(std::max(1, n)); }

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, so any
/// output written by index is identical regardless of the worker count.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(worker_count());
  if (workers <= 1 || n < 64) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t chunks = std::min(workers, n);
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = n * c / chunks;
    const std::size_t end = n * (c + 1) / chunks;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ttmfg
