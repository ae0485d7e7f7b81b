#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace easecore {

// Runs fn(0..num_tasks-1) on up to num_workers threads. Tasks must not share
// mutable state; callers aggregate results by task index so the outcome does
// not depend on scheduling. The first exception wins and is rethrown; pending
// tasks are abandoned once an error is seen.
inline void parallel_for_tasks(std::size_t num_tasks, int num_workers,
                               const std::function<void(std::size_t)>& fn) {
  if (num_workers < 1) num_workers = 1;
  if (num_tasks == 0) return;
  if (num_workers == 1 || num_tasks == 1) {
    for (std::size_t i = 0; i < num_tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= num_tasks) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        stop.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(num_workers), num_tasks);
  threads.reserve(n);
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace easecore
