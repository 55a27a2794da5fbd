#include "kdasc/runtime.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace kdasc {

void configure_runtime() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace kdasc
