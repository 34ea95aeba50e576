#pragma once

// Process-level tuning for the training loop's allocation pattern.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace onh {

// The graph allocates and frees many medium-sized buffers per sample. With
// glibc's defaults these cross the mmap threshold and every reuse faults
// fresh pages in; keeping them on the heap is markedly faster. Results are
// unaffected.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace onh
