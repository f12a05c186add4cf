#pragma once

#include <cstdint>
#include <functional>

namespace mnet {

// Process-wide worker pool used by the tensor kernels. parallel_for splits
// [begin, end) into one contiguous chunk per worker; every kernel writes
// disjoint output ranges per chunk, so results do not depend on how the
// range is split.
void set_num_threads(int n);
int num_threads();

// body(chunk_begin, chunk_end) runs on the callers thread and the workers.
void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t, int64_t)>& body);

} // namespace mnet
