#pragma once

#include <cstddef>
#include <functional>

namespace bidrn {

// Worker count for kernels: BIDRN_THREADS if set and positive, otherwise the
// hardware concurrency. set_max_threads overrides both (0 restores).
std::size_t max_threads();
void set_max_threads(std::size_t n);

// Runs body(i) for i in [0, count). Iterations are split into contiguous
// chunks; each index is visited exactly once, so kernels whose iterations
// write disjoint outputs give identical results for any thread count.
// Work below `min_per_thread` iterations per worker stays on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t min_per_thread = 1);

}  // namespace bidrn
