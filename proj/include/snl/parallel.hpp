#pragma once

#include <cstddef>
#include <functional>

namespace snl {

// Worker count: SNL_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

// Runs body(i) for i in [0, n). Iterations must write disjoint outputs; the
// first exception thrown by any iteration is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace snl
