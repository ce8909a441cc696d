#pragma once

#include <cstddef>
#include <functional>

namespace emiv {

/// Worker cap: min(EMIV_THREADS, hardware_concurrency), at least 1.
/// EMIV_THREADS unset or invalid falls back to the hardware count.
int thread_count();

/// @brief Run fn(i) for i in [0, n) on up to thread_count() workers.
///
/// Work is split into contiguous index blocks. Callers must write results to
/// per-index slots only; reductions over the slots happen sequentially after
/// the join, so results are bitwise independent of the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace emiv
