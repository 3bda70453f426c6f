#pragma once

#include <cstddef>
#include <functional>

namespace cardioquant {

/// Worker cap: CARDIOQUANT_THREADS if set (>=1), else the hardware
/// concurrency, at most 16.
unsigned worker_count();

/// Runs fn(i) for i in [0, n), possibly on several threads. Each index is
/// handled exactly once and results must be written to per-index slots, so
/// output is identical for any worker count. Exceptions from workers are
/// rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace cardioquant
