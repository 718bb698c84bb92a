// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace amc {

/// Number of hardware threads, at least 1.
std::size_t default_jobs();

/// Splits [0, n) into consecutive chunks of `chunk` items and runs
/// fn(begin, end) for each on up to `jobs` threads. Chunk boundaries depend
/// only on n and chunk, so work that writes into per-item slots produces the
/// same result for any job count. The first exception thrown by a worker is
/// rethrown after all threads join.
void parallel_chunks(std::size_t n, std::size_t chunk, std::size_t jobs,
                     const std::function<void(std::size_t, std::size_t)>& fn);

/// Tunes the allocator so large graph buffers are recycled rather than
/// returned to the OS after every step. No-op outside glibc.
void configure_allocator();

}  // namespace amc
