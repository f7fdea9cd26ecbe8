#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spde/noise.hpp"
#include "spde/parallel.hpp"

using namespace spde;

TEST_CASE("philox4x32-10 known-answer vectors") {
    // Published test vectors for the Philox4x32-10 block function.
    auto zero = philox::block({0u, 0u}, {0u, 0u, 0u, 0u});
    CHECK(zero[0] == 0x6627e8d5u);
    CHECK(zero[1] == 0xe169c58du);
    CHECK(zero[2] == 0xbc57ac4cu);
    CHECK(zero[3] == 0x9b00dbd8u);

    auto ones = philox::block({0xffffffffu, 0xffffffffu},
                              {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu});
    CHECK(ones[0] == 0x408f276du);
    CHECK(ones[1] == 0x41c83b0eu);
    CHECK(ones[2] == 0xa20bc7c6u);
    CHECK(ones[3] == 0x6d5451fdu);

    auto pi = philox::block({0xa4093822u, 0x299f31d0u},
                            {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u});
    CHECK(pi[0] == 0xd16cfe09u);
    CHECK(pi[1] == 0x94fdccebu);
    CHECK(pi[2] == 0x5001e420u);
    CHECK(pi[3] == 0x24126ea1u);
}

TEST_CASE("sample_path determinism and stream separation") {
    auto a = sample_path(42, 7, 16, 8, 0.5);
    auto b = sample_path(42, 7, 16, 8, 0.5);
    CHECK(a.increments == b.increments);

    auto c = sample_path(42, 8, 16, 8, 0.5);
    CHECK(a.increments != c.increments);

    CHECK_THROWS_AS(sample_path(1, 0, 0, 4, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(sample_path(1, 0, 4, 4, 0.0), std::invalid_argument);
}

TEST_CASE("increment moments: variance within the 5-sigma chi-square band") {
    // dt = 1, N*M = 1e5: sample variance must land in [0.985, 1.015].
    auto p = sample_path(1, 0, 1250, 80, 1.0);
    const double n = static_cast<double>(p.increments.size());
    CHECK(n == 100000.0);
    const double mean = pairwise_sum(p.increments) / n;
    std::vector<double> sq(p.increments.size());
    for (size_t i = 0; i < sq.size(); ++i) {
        sq[i] = (p.increments[i] - mean) * (p.increments[i] - mean);
    }
    const double var = pairwise_sum(sq) / (n - 1.0);
    CHECK(std::abs(mean) < 5.0 / std::sqrt(n));
    CHECK(var > 0.985);
    CHECK(var < 1.015);
}

TEST_CASE("distinct sample indices are empirically uncorrelated") {
    auto a = sample_path(9, 1, 1250, 80, 1.0);
    auto b = sample_path(9, 2, 1250, 80, 1.0);
    const double n = static_cast<double>(a.increments.size());
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.increments.size(); ++i) {
        sab += a.increments[i] * b.increments[i];
        saa += a.increments[i] * a.increments[i];
        sbb += b.increments[i] * b.increments[i];
    }
    const double rho = sab / std::sqrt(saa * sbb);
    CHECK(std::abs(rho) <= 5.0 / std::sqrt(n));
}

TEST_CASE("lag correlations within steps and modes stay small") {
    auto p = sample_path(123, 0, 2000, 50, 1.0);
    const size_t n = p.increments.size();
    for (size_t lag : {1ul, 50ul}) {  // adjacent modes, adjacent steps
        double s = 0.0;
        for (size_t i = 0; i + lag < n; ++i) s += p.increments[i] * p.increments[i + lag];
        CHECK(std::abs(s / static_cast<double>(n - lag)) <= 5.0 / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("coarsen: identity, telescoping, variance") {
    auto p = sample_path(5, 3, 64, 4, 0.125);

    auto same = coarsen(p, 1);
    CHECK(same.increments == p.increments);
    CHECK(same.dt == p.dt);

    auto c4 = coarsen(p, 4);
    CHECK(c4.steps == 16);
    CHECK(c4.dt == 0.5);

    // telescoping: collapsing everything in one shot equals collapsing the
    // coarse path (power-of-two stages compose bit-exactly)
    auto full_direct = coarsen(p, 64);
    auto full_staged = coarsen(c4, 16);
    CHECK(full_direct.increments == full_staged.increments);

    CHECK_THROWS_AS(coarsen(p, 5), std::invalid_argument);

    // variance of coarse entries ~ r dt (Gaussian sum oracle): pool many paths
    std::vector<double> pool;
    for (int s = 0; s < 40; ++s) {
        auto q = coarsen(sample_path(5, static_cast<std::uint64_t>(100 + s), 64, 4, 0.125), 8);
        pool.insert(pool.end(), q.increments.begin(), q.increments.end());
    }
    double var = 0.0;
    for (double v : pool) var += v * v;
    var /= static_cast<double>(pool.size());
    const double expect = 8 * 0.125;
    const double se = expect * std::sqrt(2.0 / static_cast<double>(pool.size()));
    CHECK(std::abs(var - expect) < 5.0 * se);
}

TEST_CASE("coarsen associativity is bit-exact across power-of-two stages") {
    auto p = sample_path(77, 11, 96, 6, 0.25);  // 96 = 3 * 32
    for (int r1 : {2, 3, 4, 6}) {
        for (int r2 : {2, 4, 8}) {
            if (96 % (r1 * r2) != 0) continue;
            auto staged = coarsen(coarsen(p, r1), r2);
            auto direct = coarsen(p, r1 * r2);
            CHECK(staged.increments == direct.increments);
            CHECK(staged.dt == direct.dt);
        }
    }
}

TEST_CASE("standard_gaussian is the primitive behind sample_path") {
    auto p = sample_path(33, 4, 3, 5, 0.04);
    for (int n = 0; n < 3; ++n) {
        for (int i = 0; i < 5; ++i) {
            const double z = standard_gaussian(33, 4, static_cast<std::uint32_t>(n),
                                               static_cast<std::uint32_t>(i));
            CHECK(p.row(n)[static_cast<size_t>(i)] == std::sqrt(0.04) * z);
        }
    }
}
