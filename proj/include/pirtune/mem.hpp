#pragma once

namespace pirtune {

// Training steps allocate and free tens of megabytes of activation and
// gradient buffers. By default glibc services those with mmap and returns
// the pages to the kernel on free, so every step pays the page faults
// again. This pins freed chunks in the malloc arena for reuse instead;
// call it once at the start of a long-running process. No-op on platforms
// without the knobs.
void retain_freed_buffers();

}  // namespace pirtune
