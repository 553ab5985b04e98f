#pragma once

#include <cstddef>
#include <functional>

namespace marlrr {

/// Calls fn(0..n-1) on up to `jobs` threads. Tasks are claimed in index
/// order; the first exception thrown by any task is rethrown after all
/// threads have joined.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace marlrr
