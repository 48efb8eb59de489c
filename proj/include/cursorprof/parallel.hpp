#pragma once

#include <cstddef>
#include <functional>

namespace cursorprof {

// Process-wide cap on worker threads (CLI --threads). 0 means hardware
// concurrency.
void set_max_threads(std::size_t n);
std::size_t max_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous blocks, so the
// result must not depend on which thread runs which index. The first
// exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cursorprof
