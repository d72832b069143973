#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sae {

// Runs body(i) for i in [0, n).  threads <= 1 uses the plain serial loop —
// the reference path the equivalence tests compare against; threads > 1
// dispatches the same body through OpenMP.  Bodies must write only to
// per-index slots: with keyed RNG streams per index, results are then
// byte-identical for every thread count.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
#ifdef _OPENMP
  if (threads > 1) {
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (long long i = 0; i < static_cast<long long>(n); ++i)
      body(static_cast<std::size_t>(i));
    return;
  }
#endif
  (void)threads;
  for (std::size_t i = 0; i < n; ++i) body(i);
}

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace sae
