#pragma once

#include <omp.h>

namespace vgen {

// Deterministic parallelism policy: loops are only parallelized over
// independent output elements (rows, cells, scenes, ...); any floating-point
// reduction happens inside one iteration in a fixed order. Results are
// therefore bitwise identical for every thread count, and each parallel
// kernel keeps a serial reference twin that runs the same per-element body.
template <class F>
inline void parallel_for(int n, F&& f) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) f(i);
}

template <class F>
inline void serial_for(int n, F&& f) {
  for (int i = 0; i < n; ++i) f(i);
}

inline int max_threads() { return omp_get_max_threads(); }
inline void set_threads(int n) { omp_set_num_threads(n); }

}  // namespace vgen
