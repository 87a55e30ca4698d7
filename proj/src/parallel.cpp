#include "rwre/parallel.hpp"

namespace rwre {

int max_workers() {
#ifdef RWRE_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace rwre
