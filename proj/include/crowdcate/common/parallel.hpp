#pragma once

#include <cstddef>
#include <functional>

namespace crowdcate {

/// Runs body(i) for i in [0, n) on up to `jobs` threads (0 = hardware concurrency).
/// The first exception thrown by any call is rethrown after all workers stop; remaining
/// indices are abandoned once a failure is seen.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& body);

std::size_t resolve_jobs(std::size_t jobs);

}  // namespace crowdcate
