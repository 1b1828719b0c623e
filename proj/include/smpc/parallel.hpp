#pragma once

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace smpc {

/// Runs fn(begin, end) over contiguous chunks of [0, count) using up to
/// `jobs` worker threads.  With jobs <= 1 (or a trivially small range) the
/// body runs inline on the calling thread.  The first exception thrown by a
/// worker is rethrown after all workers have joined.
///
/// Callers are expected to make the result independent of the chunking (for
/// example by deriving per-index random streams), so the same inputs produce
/// the same outputs for every job count.
template <typename Fn>
void parallel_for(long count, int jobs, Fn&& fn) {
  jobs = std::max(1, jobs);
  if (count <= 0) return;
  const int workers = static_cast<int>(std::min<long>(jobs, count));
  if (workers == 1) {
    fn(0L, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  const long base = count / workers;
  const long extra = count % workers;
  long begin = 0;
  for (int t = 0; t < workers; ++t) {
    const long len = base + (t < extra ? 1 : 0);
    const long end = begin + len;
    pool.emplace_back([&, begin, end]() {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
    begin = end;
  }
  for (auto& worker : pool) worker.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace smpc
