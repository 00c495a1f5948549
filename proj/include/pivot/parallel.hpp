#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace pivot {

/// Calls fn(i) for i in [0, n) on `jobs` threads. Results must be written by index so the
/// outcome does not depend on scheduling. The exception of the lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), n));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < workers; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace pivot
