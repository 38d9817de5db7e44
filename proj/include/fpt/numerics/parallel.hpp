#pragma once

#include <cstddef>
#include <functional>

namespace fpt {

/// Worker count: FPT_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_threads();

/// Calls fn(i) for i in [0, n) on up to worker_threads() threads. Work items
/// must write to disjoint state; callers that reduce must do so afterwards in
/// index order. The first exception thrown by any item is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace fpt
