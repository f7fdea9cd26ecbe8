#pragma once

#include <functional>
#include <span>

namespace spde {

/// Number of worker threads: the SPDE_THREADS environment variable when set
/// to a positive value, otherwise the hardware concurrency (0 means auto).
/// Re-read on every call so tests can vary it.
int worker_count();

/// Static contiguous split of [0, n) across workers. The function receives
/// (begin, end) of its block. Results must be written to per-index slots so
/// that the outcome is independent of the schedule.
void parallel_for_blocks(long n, const std::function<void(long, long)>& body);

/// Pairwise (cascade) summation. Deterministic for a given input order and
/// accurate for long mixed-magnitude Monte Carlo sums.
double pairwise_sum(std::span<const double> values);

/// Mean and standard error of the mean via pairwise sums (two passes).
struct MeanStderr {
    double mean;
    double stderr_of_mean;
};
MeanStderr mean_stderr(std::span<const double> values);

}  // namespace spde
