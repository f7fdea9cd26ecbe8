#include "spde/noise.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace spde {

namespace philox {

namespace {
constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWey0 = 0x9E3779B9u;
constexpr std::uint32_t kWey1 = 0xBB67AE85u;

inline void round_once(std::array<std::uint32_t, 2>& key, std::array<std::uint32_t, 4>& ctr) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWey0;
    key[1] += kWey1;
}
}  // namespace

std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 2> key,
                                   std::array<std::uint32_t, 4> counter) {
    for (int r = 0; r < 10; ++r) round_once(key, counter);
    return counter;
}

}  // namespace philox

namespace {

// 53-bit uniform strictly inside (0,1), safe for log().
inline double uniform_open(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32 | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

// Recursive block sum: peel pairs while the length is even, leading part
// otherwise. Power-of-two lengths reduce as perfect binary trees, which is
// what makes staged coarsening reproduce the direct one bit-exactly.
double block_sum(const double* v, size_t len, size_t stride) {
    if (len == 1) return v[0];
    if (len % 2 == 0) {
        const size_t half = len / 2;
        return block_sum(v, half, stride) + block_sum(v + half * stride, half, stride);
    }
    return block_sum(v, len - 1, stride) + v[(len - 1) * stride];
}

}  // namespace

namespace {

// One Philox block yields a Box-Muller pair; modes 2j and 2j+1 share block j.
inline void gaussian_pair(std::uint64_t seed, std::uint64_t sample_index, std::uint32_t step,
                          std::uint32_t pair_index, double& z0, double& z1) {
    const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                              static_cast<std::uint32_t>(seed >> 32)};
    const std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(sample_index),
                                              static_cast<std::uint32_t>(sample_index >> 32), step,
                                              pair_index};
    const auto out = philox::block(key, ctr);
    const double u1 = uniform_open(out[0], out[1]);
    const double u2 = uniform_open(out[2], out[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    z0 = r * std::cos(angle);
    z1 = r * std::sin(angle);
}

}  // namespace

double standard_gaussian(std::uint64_t seed, std::uint64_t sample_index, std::uint32_t step,
                         std::uint32_t mode) {
    double z0, z1;
    gaussian_pair(seed, sample_index, step, mode >> 1, z0, z1);
    return (mode & 1u) ? z1 : z0;
}

NoisePath sample_path(std::uint64_t seed, std::uint64_t sample_index, int steps, int modes,
                      double dt) {
    if (steps < 1 || modes < 1) throw std::invalid_argument("sample_path: steps, modes >= 1");
    if (dt <= 0.0) throw std::invalid_argument("sample_path: dt must be > 0");
    NoisePath p;
    p.steps = steps;
    p.modes = modes;
    p.dt = dt;
    p.seed = seed;
    p.sample_index = sample_index;
    p.increments.resize(static_cast<size_t>(steps) * modes);
    const double scale = std::sqrt(dt);
    for (int n = 0; n < steps; ++n) {
        double* row = p.increments.data() + static_cast<size_t>(n) * modes;
        double z0, z1;
        for (int i = 0; i + 1 < modes; i += 2) {
            gaussian_pair(seed, sample_index, static_cast<std::uint32_t>(n),
                          static_cast<std::uint32_t>(i) >> 1, z0, z1);
            row[i] = scale * z0;
            row[i + 1] = scale * z1;
        }
        if (modes & 1) {
            const int i = modes - 1;
            gaussian_pair(seed, sample_index, static_cast<std::uint32_t>(n),
                          static_cast<std::uint32_t>(i) >> 1, z0, z1);
            row[i] = scale * z0;
        }
    }
    return p;
}

NoisePath coarsen(const NoisePath& path, int r) {
    if (r < 1 || path.steps % r != 0) {
        throw std::invalid_argument("coarsen: r must be a positive divisor of the step count");
    }
    if (r == 1) return path;
    NoisePath out;
    out.steps = path.steps / r;
    out.modes = path.modes;
    out.dt = path.dt * r;
    out.seed = path.seed;
    out.sample_index = path.sample_index;
    out.increments.resize(static_cast<size_t>(out.steps) * out.modes);
    const size_t m = static_cast<size_t>(path.modes);
    for (int n = 0; n < out.steps; ++n) {
        const double* base = path.increments.data() + static_cast<size_t>(n) * r * m;
        double* dst = out.increments.data() + static_cast<size_t>(n) * m;
        for (size_t i = 0; i < m; ++i) {
            dst[i] = block_sum(base + i, static_cast<size_t>(r), m);
        }
    }
    return out;
}

}  // namespace spde
