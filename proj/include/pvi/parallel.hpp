#pragma once

#include <cstddef>
#include <functional>

namespace pvi {

// Worker cap: PVI_THREADS if set (>= 1), otherwise hardware concurrency.
// Re-read on every call so tests can toggle the variable between runs.
int worker_count();

// Runs fn(begin, end, block_index) over fixed-size blocks of [0, n).
// The block partition depends only on (n, block_size), never on the worker
// count, so any per-block output combined in block order is reproducible.
void parallel_blocks(std::size_t n, std::size_t block_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

} // namespace pvi
