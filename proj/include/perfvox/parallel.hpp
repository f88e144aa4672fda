#pragma once

#include <cstddef>
#include <functional>

namespace perfvox {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Callers write results by
// index, so output order never depends on scheduling. The exception raised for
// the lowest failing index is rethrown once every item has run.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace perfvox
