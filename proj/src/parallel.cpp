#include "hm/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hm {

int resolve_workers(int requested) {
  if (requested >= 1) return requested;
#ifdef _OPENMP
  return omp_get_num_procs();
#else
  return 1;
#endif
}

}  // namespace hm
