#pragma once

#include <cstddef>
#include <functional>

namespace sfpl {

// Runs task(i) for i in [0, count) on up to `threads` workers. Tasks must
// write only to their own output slot; the first exception is rethrown after
// all workers finish.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& task);

}  // namespace sfpl
