#pragma once

#include <cstddef>
#include <functional>

namespace frmab {

// Hardware concurrency, at least 1.
int default_jobs();

// Runs fn(i) for i in [0, count) on up to `jobs` threads. Work is handed out
// by an atomic counter; callers write results into slot i so output order
// never depends on scheduling. The first exception thrown is rethrown after
// all workers finish. jobs <= 1 runs serially on the calling thread.
void parallel_for(std::size_t count, int jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace frmab
