#include "pat/parallel.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "pat/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pat {

namespace {
int g_threads = 0;  // 0 = not set yet, use hardware default
}

int hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

int num_threads() { return g_threads > 0 ? g_threads : hardware_threads(); }

void set_num_threads(int n) {
  if (n < 1) throw ConfigError("thread count must be at least 1, got " + std::to_string(n));
  g_threads = n;
}

void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t)>& fn) {
  if (end <= begin) return;
  int64_t count = end - begin;
  int threads = static_cast<int>(std::min<int64_t>(num_threads(), count));
#ifdef _OPENMP
  if (threads > 1) {
    // Exceptions must not unwind out of the parallel region; keep the first
    // one and rethrow after the loop joins.
    std::exception_ptr error;
#pragma omp parallel for schedule(static) num_threads(threads)
    for (int64_t i = begin; i < end; ++i) {
      try {
        fn(i);
      } catch (...) {
#pragma omp critical(pat_parallel_for_error)
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    return;
  }
#else
  (void)threads;
#endif
  for (int64_t i = begin; i < end; ++i) fn(i);
}

}  // namespace pat
