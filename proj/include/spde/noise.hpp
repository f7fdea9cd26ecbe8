#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace spde {

/// Truncated cylindrical Wiener increments: an N x M matrix with independent
/// Normal(0, dt) entries, one column per retained sine mode. Entries are
/// derived from a counter-based stream keyed by (seed, sample_index, step,
/// mode), so regeneration is bit-exact and samples can be generated on any
/// number of threads in any order.
struct NoisePath {
    int steps = 0;
    int modes = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t sample_index = 0;
    std::vector<double> increments;  // row-major steps x modes

    std::span<const double> row(int n) const {
        return {increments.data() + static_cast<size_t>(n) * modes, static_cast<size_t>(modes)};
    }
    std::span<double> row(int n) {
        return {increments.data() + static_cast<size_t>(n) * modes, static_cast<size_t>(modes)};
    }
};

NoisePath sample_path(std::uint64_t seed, std::uint64_t sample_index, int steps, int modes,
                      double dt);

/// Coarse increment n is the sum of fine increments r*n .. r*n+r-1 and the
/// step size scales by r: the same Wiener path seen at the coarse times.
/// Block sums peel any odd factor sequentially and then halve pairwise, so
/// coarsening by power-of-two stages composes bit-exactly:
/// coarsen(coarsen(p, r1), 2^k) == coarsen(p, r1 * 2^k).
NoisePath coarsen(const NoisePath& path, int r);

/// Standard normal draw for stream position (seed, sample, step, mode);
/// the primitive behind sample_path, exposed for tests.
double standard_gaussian(std::uint64_t seed, std::uint64_t sample_index, std::uint32_t step,
                         std::uint32_t mode);

namespace philox {
/// Philox4x32-10 block function (key, counter) -> 4 output words.
std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 2> key,
                                   std::array<std::uint32_t, 4> counter);
}  // namespace philox

}  // namespace spde
