#pragma once

#if defined(_OPENMP)
#include <omp.h>
#define ENGAGE_PRAGMA(x) _Pragma(#x)
#else
#define ENGAGE_PRAGMA(x)
#endif

// Loops annotated with ENGAGE_PARALLEL_FOR write disjoint outputs and keep a
// fixed per-element summation order, so results do not depend on the thread
// count.
#define ENGAGE_PARALLEL_FOR ENGAGE_PRAGMA(omp parallel for schedule(static))
#define ENGAGE_PARALLEL_FOR2 ENGAGE_PRAGMA(omp parallel for collapse(2) schedule(static))
#define ENGAGE_SIMD_SUM(acc) ENGAGE_PRAGMA(omp simd reduction(+ : acc))
#define ENGAGE_SIMD ENGAGE_PRAGMA(omp simd)

namespace engage {

/// Applies the ENGAGE_THREADS cap (if set) and returns the active count.
int configure_threads_from_env();
void set_thread_count(int threads);
int thread_count();

/// Keeps large freed blocks in the heap so per-batch feature maps are reused
/// instead of being mapped and faulted in again. Idempotent.
void tune_allocator();

}  // namespace engage
