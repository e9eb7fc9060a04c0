#pragma once

#include <cstddef>
#include <functional>

namespace kae {

// Worker-thread count: KAE_THREADS caps it, default is the available hardware
// parallelism. Always at least 1.
int worker_count();

// Runs fn(begin, end) over a static partition of [0, n). Each index is
// processed by exactly one worker with a fixed sequential inner loop, so the
// result is identical for any thread count. Nested calls run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace kae
