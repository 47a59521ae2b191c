#pragma once

#include <cstddef>
#include <functional>

namespace geovar {

/// Worker cap from GEOVAR_THREADS; unset or 0 means hardware concurrency.
unsigned worker_count();

/// Runs task(i) for i in [0, n_tasks) on up to `workers` threads. Tasks must
/// write only to their own output slot; callers merge slots in index order.
void parallel_for(std::size_t n_tasks, unsigned workers, const std::function<void(std::size_t)>& task);

}  // namespace geovar
