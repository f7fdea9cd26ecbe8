#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>

#include "spde/estimators.hpp"
#include "spde/parallel.hpp"
#include "spde/solver.hpp"

using namespace spde;

namespace {

SchemeParams make_params(const char* bundle, double dt, int steps, int modes, double delta = 0.0,
                         double tau = 0.0) {
    return {dt, steps, modes, {delta, tau}, CoefficientBundle::preset(bundle)};
}

double rel_l2(std::span<const double> a, std::span<const double> b) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(1e-300, std::sqrt(den));
}

}  // namespace

TEST_CASE("pure decay: X_n = S^n x") {
    const int M = 8, N = 12;
    auto g = build_grid(M);
    auto params = make_params("decay", 0.02, N, M);
    Euler engine(g, params);
    auto x0 = Field::basis(g, 2, 1.5);
    auto path = sample_path(3, 0, N, M, params.dt);
    auto traj = engine.simulate(x0, path);

    auto expect = apply_resolvent_power(N, params.dt, x0);
    for (int i = 0; i < M; ++i) {
        CHECK(traj.state(N)[static_cast<size_t>(i)] ==
              doctest::Approx(expect.modal()[static_cast<size_t>(i)]).epsilon(1e-13).scale(1e-12));
    }
}

TEST_CASE("additive noise: per-mode scalar recursion oracle") {
    const int M = 6, N = 20;
    auto g = build_grid(M);
    auto params = make_params("linear-additive", 0.01, N, M);
    Euler engine(g, params);
    auto x0 = Field::basis(g, 1, 0.7);
    auto path = sample_path(11, 5, N, M, params.dt);
    auto traj = engine.simulate(x0, path);

    const double c = 0.5;
    for (int i = 0; i < M; ++i) {
        const double r = 1.0 / (1.0 + params.dt * g->eigenvalue(i));
        double a = x0.modal()[static_cast<size_t>(i)];
        for (int n = 0; n < N; ++n) {
            a = r * (a + c * path.row(n)[static_cast<size_t>(i)]);
        }
        CHECK(traj.state(N)[static_cast<size_t>(i)] == doctest::Approx(a).epsilon(1e-12).scale(1e-14));
    }
}

TEST_CASE("zero noise: bounded growth of the L2 norm per step") {
    const int M = 32;
    auto g = build_grid(M);
    auto params = make_params("smooth-default", 0.005, 1, M);
    Euler engine(g, params);

    std::vector<double> modal(static_cast<size_t>(M));
    for (int i = 0; i < M; ++i) modal[static_cast<size_t>(i)] = std::cos(1.0 + i) / (1.0 + i);
    auto x = Field::from_modal(g, modal);
    auto zero_dw = Field::zero(g);
    auto next = engine.step(x, zero_dw);

    // |X_{n+1}| <= |X_n| + dt B0 + dt |B F2 part|, with the Burgers norm taken
    // from the drift of the pure-Burgers bundle at the same state.
    auto b = CoefficientBundle::preset("smooth-default");
    auto decay = CoefficientBundle::preset("decay");
    CoefficientBundle burgers_only("b", decay.f1(), b.f2(), decay.sigma(), decay.phi());
    const double burgers_norm = drift_G(burgers_only, x, params.reg).l2_norm();
    const double b0 = b.f1().bound[0];
    CHECK(next.l2_norm() <= x.l2_norm() + params.dt * b0 + params.dt * burgers_norm + 1e-12);
}

TEST_CASE("nonfinite states raise numerical_failure with the step index") {
    const int M = 4;
    auto g = build_grid(M);
    auto huge = [](double) { return 1e308; };
    auto z = [](double) { return 0.0; };
    ScalarC3 blowup{{huge, z, z, z}, {1e308, 0, 0, 0}};
    auto decay = CoefficientBundle::preset("decay");
    CoefficientBundle bad("bad", blowup, decay.f2(), decay.sigma(), decay.phi());
    SchemeParams params{1.0, 3, M, {}, bad};
    Euler engine(g, params);
    auto path = sample_path(1, 0, 3, M, params.dt);
    try {
        engine.simulate(Field::zero(g), path);
        FAIL("expected numerical_failure");
    } catch (const numerical_failure& e) {
        CHECK(e.step() >= 0);
    }
}

TEST_CASE("simulate: N = 0 returns just the initial state") {
    const int M = 5;
    auto g = build_grid(M);
    auto params = make_params("smooth-default", 0.01, 0, M);
    Euler engine(g, params);
    NoisePath empty;
    empty.modes = M;
    empty.dt = params.dt;
    auto x0 = Field::basis(g, 1);
    auto traj = engine.simulate(x0, empty);
    CHECK(traj.steps == 0);
    for (int i = 0; i < M; ++i) {
        CHECK(traj.state(0)[static_cast<size_t>(i)] == x0.modal()[static_cast<size_t>(i)]);
    }
}

TEST_CASE("linear additive: terminal mode variances match the geometric sum") {
    const int M = 4, N = 8;
    const long samples = 100000;
    auto g = build_grid(M);
    auto params = make_params("linear-additive", 0.03, N, M);
    const double c = 0.5;

    std::vector<std::vector<double>> per_mode(static_cast<size_t>(M),
                                              std::vector<double>(static_cast<size_t>(samples)));
    parallel_for_blocks(samples, [&](long begin, long end) {
        Euler engine(g, params);
        std::vector<double> out(static_cast<size_t>(M));
        std::vector<double> zero(static_cast<size_t>(M), 0.0);
        for (long s = begin; s < end; ++s) {
            auto path = sample_path(21, static_cast<std::uint64_t>(s), N, M, params.dt);
            engine.run_terminal(zero, path, out);
            for (int i = 0; i < M; ++i) {
                per_mode[static_cast<size_t>(i)][static_cast<size_t>(s)] =
                    out[static_cast<size_t>(i)];
            }
        }
    });

    for (int i = 0; i < M; ++i) {
        const double r2 = std::pow(1.0 / (1.0 + params.dt * g->eigenvalue(i)), 2);
        const double expect = c * c * params.dt * r2 * (1.0 - std::pow(r2, N)) / (1.0 - r2);
        std::vector<double> sq(per_mode[static_cast<size_t>(i)].size());
        for (size_t s = 0; s < sq.size(); ++s) {
            sq[s] = per_mode[static_cast<size_t>(i)][s] * per_mode[static_cast<size_t>(i)][s];
        }
        const auto ms = mean_stderr(sq);
        CHECK(std::abs(ms.mean - expect) <= 4.0 * ms.stderr_of_mean);
    }
}

TEST_CASE("mild-form identity holds for the nonlinear preset") {
    const int M = 24, N = 16;
    auto g = build_grid(M);
    auto params = make_params("smooth-default", 0.01, N, M);
    Euler engine(g, params);
    auto x0 = Field::basis(g, 1, 1.0);
    auto path = sample_path(17, 2, N, M, params.dt);
    SimulateOptions opts;
    opts.validate_mild = true;  // throws numerical_failure above 1e-9 relative
    CHECK_NOTHROW(engine.simulate(x0, path, opts));
}

TEST_CASE("simulate_coupled") {
    const int M = 16;
    auto g = build_grid(M);
    auto x0 = Field::basis(g, 1, 1.0);

    SUBCASE("r = 1 gives identical outputs") {
        auto params = make_params("smooth-default", 0.01, 8, M);
        Euler engine(g, params);
        auto path = sample_path(5, 1, 8, M, params.dt);
        auto [fine, coarse] = engine.simulate_coupled(x0, path, 1);
        for (int i = 0; i < M; ++i) {
            CHECK(fine.modal()[static_cast<size_t>(i)] == coarse.modal()[static_cast<size_t>(i)]);
        }
    }

    SUBCASE("deterministic case: both are resolvent decays, path-independent") {
        auto params = make_params("decay", 0.005, 16, M);
        Euler engine(g, params);
        auto path = sample_path(6, 0, 16, M, params.dt);
        auto [fine, coarse] = engine.simulate_coupled(x0, path, 4);
        auto f_expect = apply_resolvent_power(16, 0.005, x0);
        auto c_expect = apply_resolvent_power(4, 0.02, x0);
        CHECK(rel_l2(fine.modal(), f_expect.modal()) < 1e-12);
        CHECK(rel_l2(coarse.modal(), c_expect.modal()) < 1e-12);
    }

    SUBCASE("coupled distance shrinks as the coarse level refines") {
        const int fine_steps = 64;
        auto params = make_params("smooth-default", 0.25 / fine_steps, fine_steps, M);
        const long samples = 1000;
        const int rs[3] = {16, 8, 4};
        std::vector<std::vector<double>> d2(3, std::vector<double>(static_cast<size_t>(samples)));
        parallel_for_blocks(samples, [&](long begin, long end) {
            Euler engine(g, params);
            for (long s = begin; s < end; ++s) {
                auto path = sample_path(31, static_cast<std::uint64_t>(s), fine_steps, M, params.dt);
                for (int j = 0; j < 3; ++j) {
                    auto [fine, coarse] = engine.simulate_coupled(x0, path, rs[j]);
                    double acc = 0.0;
                    for (int i = 0; i < M; ++i) {
                        const double d = fine.modal()[static_cast<size_t>(i)] -
                                         coarse.modal()[static_cast<size_t>(i)];
                        acc += d * d;
                    }
                    d2[static_cast<size_t>(j)][static_cast<size_t>(s)] = acc;
                }
            }
        });
        const double m16 = pairwise_sum(d2[0]);
        const double m8 = pairwise_sum(d2[1]);
        const double m4 = pairwise_sum(d2[2]);
        CHECK(m4 < m8);
        CHECK(m8 < m16);
    }
}

TEST_CASE("moment_probe") {
    const int M = 8, N = 16;
    auto g = build_grid(M);

    SUBCASE("deterministic decay: exact value, zero variance") {
        auto params = make_params("decay", 0.01, N, M);
        auto x0 = Field::basis(g, 1, 2.0);
        auto est = moment_probe(params, x0, 16, 0.0, 9);
        const double expect =
            std::pow(2.0 / std::pow(1.0 + 0.01 * g->eigenvalue(0), N), 2);
        CHECK(est.mean == doctest::Approx(expect).epsilon(1e-12));
        CHECK(est.stderr_of_mean == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
    }

    SUBCASE("additive case matches the geometric-sum oracle within 4 SE") {
        auto params = make_params("linear-additive", 0.01, N, M);
        auto x0 = Field::basis(g, 1, 0.5);
        auto est = moment_probe(params, x0, 40000, 0.0, 12);
        double expect = 0.0;
        const double c = 0.5;
        for (int i = 0; i < M; ++i) {
            const double r2 = std::pow(1.0 / (1.0 + params.dt * g->eigenvalue(i)), 2);
            expect += (i == 0 ? 0.25 : 0.0) * std::pow(r2, N);
            expect += c * c * params.dt * r2 * (1.0 - std::pow(r2, N)) / (1.0 - r2);
        }
        CHECK(std::abs(est.mean - expect) <= 4.0 * est.stderr_of_mean);
    }

    SUBCASE("refinement stability: dt and dt/2 estimates within 10%") {
        auto params = make_params("smooth-default", 0.25 / 32, 32, M);
        auto half = make_params("smooth-default", 0.25 / 64, 64, M);
        auto x0 = Field::basis(g, 1, 1.0);
        auto a = moment_probe(params, x0, 4000, 0.1, 3);
        auto b = moment_probe(half, x0, 4000, 0.1, 3);
        CHECK(std::abs(a.mean - b.mean) <= 0.1 * std::max(a.mean, b.mean));
    }

    CHECK_THROWS_AS(moment_probe(make_params("decay", 0.01, 2, M), Field::zero(g), 4, 0.3, 1),
                    std::invalid_argument);
}

TEST_CASE("determinism across thread counts") {
    const int M = 12, N = 10;
    auto g = build_grid(M);
    auto params = make_params("smooth-default", 0.01, N, M);
    auto x0 = Field::basis(g, 1, 1.0);

    setenv("SPDE_THREADS", "1", 1);
    auto a = moment_probe(params, x0, 600, 0.0, 77);
    setenv("SPDE_THREADS", "3", 1);
    auto b = moment_probe(params, x0, 600, 0.0, 77);
    unsetenv("SPDE_THREADS");
    CHECK(a.mean == b.mean);
    CHECK(a.stderr_of_mean == b.stderr_of_mean);
}

TEST_CASE("smoothing continuity: delta = tau = 1e-8 stays within 1e-6 of the production scheme") {
    // The perturbation scales like delta * lambda_M, so desk scale means a
    // modest mode count.
    const int M = 4, N = 16;
    auto g = build_grid(M);
    auto base = make_params("smooth-default", 0.01, N, M);
    auto reg = make_params("smooth-default", 0.01, N, M, 1e-8, 1e-8);
    auto x0 = Field::basis(g, 1, 2.0);
    auto path = sample_path(13, 4, N, M, 0.01);

    Euler e1(g, base), e2(g, reg);
    auto t1 = e1.simulate(x0, path);
    auto t2 = e2.simulate(x0, path);
    CHECK(rel_l2(t2.state(N), t1.state(N)) <= 1e-6);
}
