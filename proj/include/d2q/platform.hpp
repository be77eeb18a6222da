#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace d2q {

// Training allocates and frees many ~50 KB buffers per gradient step; with
// glibc's default thresholds each step returns memory to the OS and faults it
// back in. Call once at program start.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    mallopt(M_TOP_PAD, 64 << 20);
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
#endif
}

}  // namespace d2q
