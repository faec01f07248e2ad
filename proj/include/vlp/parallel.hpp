#pragma once

#include <cstddef>
#include <functional>

namespace vlp {

/// 0 maps to the hardware concurrency (at least 1).
unsigned resolve_threads(unsigned requested);

/// Runs fn(i) for every i in [0, n) on up to `threads` workers. The first exception thrown by any
/// worker is rethrown after all workers stop.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

}  // namespace vlp
