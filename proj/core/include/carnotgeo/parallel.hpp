#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace carnot {

// Worker count: hardware concurrency capped by CARNOTGEO_THREADS.
unsigned worker_count();

// Runs body(i) for i in [0, count) over static contiguous chunks. Each index
// is visited exactly once; callers write into preallocated per-index slots.
// The first exception thrown by any worker is rethrown after all join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

// Pairwise summation in a fixed tree order; independent of worker count.
double pairwise_sum(const double* v, std::size_t count);
inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

}  // namespace carnot
