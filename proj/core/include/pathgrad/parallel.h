#pragma once

#include <cstddef>
#include <functional>

namespace pathgrad {

/// Worker count: PATHGRAD_THREADS if set and positive, else hardware
/// concurrency, never below 1.
std::size_t WorkerCount();

/// Runs body(i) for i in [0, n). Each index runs exactly once; callers write
/// results into index-addressed slots so the merge order is fixed. The first
/// exception thrown by any body is rethrown after all workers join. Calls made
/// from inside a worker run serially.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace pathgrad
