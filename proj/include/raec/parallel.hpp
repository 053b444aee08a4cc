#ifndef RAEC_PARALLEL_HPP_
#define RAEC_PARALLEL_HPP_

#include <raec/common.hpp>

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace raec {

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. Work items must write to
/// disjoint outputs; results are then identical for any job count. The first
/// exception (lowest index) is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr error;
  std::size_t error_index = n;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < error_index) {
          error_index = i;
          error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t j = 0; j < jobs; ++j) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace raec

#endif  // RAEC_PARALLEL_HPP_
