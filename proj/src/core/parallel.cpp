#include "core/parallel.hpp"

#include <malloc.h>

#include <cstdlib>
#include <mutex>
#include <string>

namespace engage {

void set_thread_count(int threads) {
#if defined(_OPENMP)
  if (threads >= 1) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

int thread_count() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int configure_threads_from_env() {
  if (const char* env = std::getenv("ENGAGE_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1 && cap < thread_count()) set_thread_count(cap);
    } catch (...) {
      // ignore malformed values
    }
  }
  return thread_count();
}

}  // namespace engage

namespace engage {

void tune_allocator() {
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
}

}  // namespace engage
