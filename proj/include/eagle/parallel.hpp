// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace eagle {

/// Runs job(i) for i in [0, n) on at most max_workers threads. All jobs
/// settle before returning; the lowest-index failure is rethrown so error
/// choice does not depend on scheduling.
inline void run_bounded(size_t n, size_t max_workers,
                        const std::function<void(size_t)>& job) {
  if (n == 0) return;
  size_t workers = std::min(std::max<size_t>(max_workers, 1), n);
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace eagle
