#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace exlab {

/// Per-replication seed: a splitmix64 mix of (master, index).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// 0 means "all hardware threads".
int resolve_workers(int requested);

/// Runs body(i) for i in [0, count) on `workers` threads. Work is handed
/// out by index; callers store results by index so the merged output does
/// not depend on scheduling. The first exception thrown by any task is
/// rethrown after all workers have joined.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body);

}  // namespace exlab
