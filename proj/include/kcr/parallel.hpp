#pragma once

#include <functional>

namespace kcr {

/// Worker count: min(hardware threads, KCR_THREADS env var when set).
/// Resolved once per process.
int worker_count();

/// Runs fn(i) for i in [0, n). Iterations must write to disjoint locations;
/// each index is processed by exactly one fixed sequential loop, so results
/// are bit-identical for any worker count.
void parallel_for(int n, const std::function<void(int)>& fn);

} // namespace kcr
