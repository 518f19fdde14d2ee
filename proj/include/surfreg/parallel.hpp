#ifndef SURFREG_PARALLEL_HPP
#define SURFREG_PARALLEL_HPP

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace surfreg {

/*! Run fn(i) for i in [0, n_tasks) on up to `workers` threads.
 *
 *  Tasks pull indices from a shared counter; callers store results by
 *  task index so the aggregate is identical for any worker count.
 *  The first exception thrown by any task is rethrown on the caller.
 */
template <typename Fn>
void parallel_for(std::size_t n_tasks, int workers, Fn&& fn) {
  if (n_tasks == 0) return;
  std::size_t n_threads =
      std::min<std::size_t>(n_tasks, workers < 1 ? 1 : static_cast<std::size_t>(workers));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace surfreg

#endif
