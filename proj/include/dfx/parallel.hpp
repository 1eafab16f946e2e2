#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <functional>
#include <thread>
#include <vector>

namespace dfx {

// Global worker cap, settable from the CLI. 0 means hardware concurrency.
int max_threads();
void set_max_threads(int k);

namespace detail {
inline bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

// Runs f(i) for i in [0, n). Each item must write only to its own output
// slot; results are then independent of scheduling. Nested calls run serial.
// The first worker exception is rethrown on the calling thread.
template <typename F>
void parallel_for(int n, F&& f) {
  if (n <= 0) return;
  int k = max_threads();
  if (k <= 0) k = static_cast<int>(std::thread::hardware_concurrency());
  if (k < 1) k = 1;
  if (k == 1 || n == 1 || detail::in_parallel_region()) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  k = std::min(k, n);
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(k);
  for (int t = 0; t < k; ++t) {
    workers.emplace_back([&]() {
      detail::in_parallel_region() = true;
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n || failed.load()) break;
        try {
          f(i);
        } catch (...) {
          const std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace dfx
