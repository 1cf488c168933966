#include "pirtune/mem.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace pirtune {

void retain_freed_buffers() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

}  // namespace pirtune
