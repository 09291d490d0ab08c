#pragma once

#include <cstddef>
#include <functional>

namespace skinsplat {

/// Worker count: SKINSPLAT_THREADS if set to a positive integer, else the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) across worker_count() threads. Work items are
/// handed out dynamically; callers must make fn's effects independent of the
/// schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace skinsplat
