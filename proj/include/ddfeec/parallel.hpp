#pragma once

#include <functional>

namespace ddfeec {

// Worker count from DDFEEC_THREADS, else the hardware concurrency.
int thread_count();
void set_thread_count(int n);

// Runs body(i) for i in [0, n). Callers write into per-index slots and reduce in index order.
void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace ddfeec
