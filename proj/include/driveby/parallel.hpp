#pragma once

#include <cstddef>
#include <functional>

namespace driveby {

// Runs fn(i) for every i in [0, n) on up to `threads` workers. Each index runs
// exactly once, so results written to per-index slots do not depend on
// scheduling. The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace driveby
