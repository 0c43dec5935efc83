#pragma once

#include <cstddef>
#include <functional>

namespace chaosflow {

// Worker pool size used by parallel_for.  Resolution order: explicit
// set_thread_count(), then the CHAOSFLOW_THREADS environment variable,
// then std::thread::hardware_concurrency().
std::size_t thread_count();
void set_thread_count(std::size_t n); // 0 restores automatic selection

// Splits [begin, end) into contiguous chunks, one per worker.  Results must
// be written to per-index slots so the outcome does not depend on the number
// of workers; any cross-index reduction belongs after the call, in index
// order.  The first exception thrown by a worker is rethrown to the caller.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t, std::size_t)>& chunk_body);

} // namespace chaosflow
