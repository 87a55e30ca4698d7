#pragma once

#include <cstdint>
#include <vector>

#ifdef RWRE_HAVE_OPENMP
#include <omp.h>
#endif

namespace rwre {

int max_workers();

// Runs body(i) for i in [0,n). workers <= 1 is the serial reference path
// (no OpenMP region at all); otherwise OpenMP splits the range. Bodies must
// write only to disjoint slots or worker-count-independent accumulators.
template <class Body>
void parallel_for(std::int64_t n, int workers, Body body) {
#ifdef RWRE_HAVE_OPENMP
  if (workers > 1) {
#pragma omp parallel for schedule(dynamic, 64) num_threads(workers)
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#endif
  (void)workers;
  for (std::int64_t i = 0; i < n; ++i) body(i);
}

// Chunked map-reduce whose chunk boundaries depend only on n, never on the
// worker count, so a serial merge over chunk order gives bit-identical
// results at any parallelism. body(i, acc) must touch only its chunk's acc.
template <class Acc, class Body>
std::vector<Acc> chunked_map(std::int64_t n, int workers, Body body) {
  std::int64_t n_chunks = n < 256 ? (n > 0 ? n : 0) : 256;
  std::vector<Acc> accs(static_cast<std::size_t>(n_chunks));
  parallel_for(n_chunks, workers, [&](std::int64_t c) {
    std::int64_t lo = n * c / n_chunks;
    std::int64_t hi = n * (c + 1) / n_chunks;
    for (std::int64_t i = lo; i < hi; ++i) body(i, accs[static_cast<std::size_t>(c)]);
  });
  return accs;
}

}  // namespace rwre
