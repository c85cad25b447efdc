#pragma once

#include <cstddef>
#include <functional>

namespace phaseforge {

/// Worker count: `requested` when positive, else PHASEFORGE_THREADS, else 1.
int resolve_threads(int requested);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Callers write
/// results into per-index slots so the outcome does not depend on
/// scheduling. The first exception by index is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace phaseforge
