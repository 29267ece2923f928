#pragma once

#include <cstdint>
#include <functional>

namespace pat {

// Thread count used by parallel_for. Defaults to the hardware concurrency;
// set_num_threads(1) makes every loop run serially.
int num_threads();
void set_num_threads(int n);
int hardware_threads();

// Runs fn(i) for every i in [begin, end), split into contiguous chunks.
// Each index runs exactly once, so loops whose iterations write disjoint
// outputs produce bit-identical results at any thread count.
void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t)>& fn);

}  // namespace pat
