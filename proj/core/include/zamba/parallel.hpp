#pragma once

#include <cstdint>
#include <functional>

namespace zamba {

// Global worker count for parallel_for. 1 (the default) runs inline.
void set_num_threads(int n);
int num_threads();

// Static partition of [begin, end) into at most num_threads() contiguous
// chunks. Each index is processed by exactly one worker and every chunk is
// identical for a given range, so results never depend on the thread count
// as long as the body only writes to its own indices.
void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t, int64_t)>& body);

// Raises the glibc mmap threshold so the multi-megabyte activation buffers
// churned every training step are recycled in the arena instead of being
// mapped and faulted in again each time. No-op on other libcs.
void tune_allocator();

}  // namespace zamba
