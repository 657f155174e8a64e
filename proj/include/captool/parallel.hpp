#pragma once

#include <cstddef>
#include <functional>

namespace captool {

/// Number of logical cores, at least 1.
int default_jobs() noexcept;

/// Runs fn(0) .. fn(count - 1) on up to `jobs` threads. Every index runs even
/// if some throw; afterwards the exception of the lowest failing index is
/// rethrown, so the outcome does not depend on scheduling.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace captool
