#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace twofield {

// Worker budget handed to the simulation and estimation layers. A budget of
// one runs everything inline on the calling thread.
struct Workers {
  int count = 1;

  static Workers single() { return Workers{1}; }
  static Workers hardware() {
    return Workers{std::max(1, static_cast<int>(std::thread::hardware_concurrency()))};
  }
};

// Runs fn(i) for i in [0, n). Units are independent; results must be written
// to per-index slots so the outcome does not depend on scheduling. The first
// exception thrown by any unit is rethrown after all threads join.
template <typename Fn>
void parallel_for(std::size_t n, Workers workers, Fn&& fn) {
  const auto nthreads =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers.count)));
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (std::size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace twofield
