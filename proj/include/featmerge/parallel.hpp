#pragma once

#include <cstddef>
#include <functional>

namespace featmerge {

/// Worker count: FEATMERGE_THREADS when set (minimum 1), otherwise the
/// hardware concurrency.
std::size_t thread_count();

/// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each,
/// at most thread_count() at a time. Chunk boundaries never affect results
/// as long as fn writes disjoint outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace featmerge
