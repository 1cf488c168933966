#pragma once

#include "pirtune/kernels.hpp"

// Internal: per-arch kernel tables. Only the tables for the compiled
// architecture exist at link time; dispatch.cpp guards accordingly.
namespace pirtune::kernels {

const KernelTable& scalar_table();

#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
const KernelTable& avx512_table();
#endif

#if defined(__aarch64__) || defined(_M_ARM64)
const KernelTable& neon_table();
#endif

}  // namespace pirtune::kernels
