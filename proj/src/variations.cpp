#include "spde/variations.hpp"

#include <cmath>
#include <stdexcept>

#include "spde/parallel.hpp"

namespace spde {

namespace {

void require_noise(const Trajectory& traj, const char* what) {
    if (!traj.noise.has_value()) {
        throw std::logic_error(std::string(what) + ": trajectory has no retained noise");
    }
}

std::vector<double> resolvent_power_modal(const SpectralGrid& g, double dt, int n,
                                          std::span<const double> modal) {
    std::vector<double> out(modal.begin(), modal.end());
    const auto lam = g.eigenvalues();
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] *= std::pow(1.0 / (1.0 + dt * lam[i]), n);
    }
    return out;
}

}  // namespace

Field pi_apply(const Field& x_n, const Field& dw_n, const Field& z, const SchemeParams& params) {
    Euler engine(x_n.grid_ptr(), params);
    engine.begin_step(x_n.modal(), dw_n.modal());
    std::vector<double> out(static_cast<size_t>(params.modes));
    engine.tangent_step(z.modal(), out);
    return Field::from_modal(x_n.grid_ptr(), std::move(out));
}

Field step_eta(const Field& eta_n, const Field& x_n, const Field& dw_n,
               const SchemeParams& params) {
    return pi_apply(x_n, dw_n, eta_n, params);
}

Field step_zeta(const Field& zeta_n, const Field& eta_h_n, const Field& eta_k_n, const Field& x_n,
                const Field& dw_n, const SchemeParams& params) {
    Euler engine(x_n.grid_ptr(), params);
    engine.begin_step(x_n.modal(), dw_n.modal());
    std::vector<double> out(static_cast<size_t>(params.modes));
    engine.second_variation_step(zeta_n.modal(), eta_h_n.modal(), eta_k_n.modal(), out);
    return Field::from_modal(x_n.grid_ptr(), std::move(out));
}

TwoSidedParts two_sided_eta(const Trajectory& traj, const Field& h, const SchemeParams& params) {
    require_noise(traj, "two_sided_eta");
    const auto& path = *traj.noise;
    const int n_steps = traj.steps;
    const size_t m = static_cast<size_t>(traj.modes);
    Euler engine(traj.grid, params);

    std::vector<double> drift_sum(m, 0.0), noise_sum(m, 0.0);
    std::vector<double> v(m), w(m);
    for (int l = 0; l < n_steps; ++l) {
        // Source terms at step l, seeded with S^l h.
        auto slh = resolvent_power_modal(*traj.grid, params.dt, l, h.modal());
        engine.begin_step(traj.state(l), path.row(l), l);
        engine.tangent_source_split(slh, v, w);
        // Push each through Pi_{N-1:l+1}.
        for (int n = l + 1; n < n_steps; ++n) {
            engine.begin_step(traj.state(n), path.row(n), n);
            engine.tangent_step(v, v);
            engine.tangent_step(w, w);
        }
        for (size_t i = 0; i < m; ++i) {
            drift_sum[i] += v[i];
            noise_sum[i] += w[i];
        }
    }
    return {Field::from_modal(traj.grid, std::move(drift_sum)),
            Field::from_modal(traj.grid, std::move(noise_sum))};
}

TwoSidedParts two_sided_zeta(const Trajectory& traj, const Field& h, const Field& k,
                             const SchemeParams& params) {
    require_noise(traj, "two_sided_zeta");
    const auto& path = *traj.noise;
    const int n_steps = traj.steps;
    const size_t m = static_cast<size_t>(traj.modes);
    Euler engine(traj.grid, params);

    // Tangent histories eta_l^h, eta_l^k along the given trajectory.
    std::vector<double> eta_h(static_cast<size_t>(n_steps + 1) * m);
    std::vector<double> eta_k(static_cast<size_t>(n_steps + 1) * m);
    for (size_t i = 0; i < m; ++i) {
        eta_h[i] = h.modal()[i];
        eta_k[i] = k.modal()[i];
    }
    for (int n = 0; n < n_steps; ++n) {
        engine.begin_step(traj.state(n), path.row(n), n);
        const size_t off = static_cast<size_t>(n) * m;
        std::span<const double> eh{eta_h.data() + off, m}, ek{eta_k.data() + off, m};
        std::span<double> eh_next{eta_h.data() + off + m, m}, ek_next{eta_k.data() + off + m, m};
        engine.tangent_step(eh, eh_next);
        engine.tangent_step(ek, ek_next);
    }

    std::vector<double> drift_sum(m, 0.0), noise_sum(m, 0.0);
    std::vector<double> v(m), w(m);
    for (int l = 0; l < n_steps; ++l) {
        const size_t off = static_cast<size_t>(l) * m;
        engine.begin_step(traj.state(l), path.row(l), l);
        engine.second_source_split({eta_h.data() + off, m}, {eta_k.data() + off, m}, v, w);
        for (int n = l + 1; n < n_steps; ++n) {
            engine.begin_step(traj.state(n), path.row(n), n);
            engine.tangent_step(v, v);
            engine.tangent_step(w, w);
        }
        for (size_t i = 0; i < m; ++i) {
            drift_sum[i] += v[i];
            noise_sum[i] += w[i];
        }
    }
    return {Field::from_modal(traj.grid, std::move(drift_sum)),
            Field::from_modal(traj.grid, std::move(noise_sum))};
}

Field malliavin_derivative(const Trajectory& traj, int l, int n, const Field& theta,
                           const SchemeParams& params) {
    if (l < 0 || n < 0 || n > traj.steps) {
        throw std::invalid_argument("malliavin_derivative: index out of range");
    }
    if (l >= n) return Field::zero(traj.grid);
    require_noise(traj, "malliavin_derivative");
    const auto& path = *traj.noise;
    const size_t m = static_cast<size_t>(traj.modes);
    Euler engine(traj.grid, params);

    std::vector<double> v(m);
    engine.begin_step(traj.state(l), path.row(l), l);
    engine.diffusion_map(theta.modal(), v);
    for (int j = l + 1; j < n; ++j) {
        engine.begin_step(traj.state(j), path.row(j), j);
        engine.tangent_step(v, v);
    }
    return Field::from_modal(traj.grid, std::move(v));
}

MalliavinCheckResult malliavin_fd_check(const SchemeParams& params, const Field& x0, int trials,
                                        double epsilon, std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("malliavin_fd_check: trials must be >= 1");
    GridPtr grid = x0.grid_ptr();
    const size_t m = static_cast<size_t>(params.modes);
    const int n_steps = params.steps;

    Euler engine(grid, params);
    const NoisePath path = sample_path(seed, 0, n_steps, params.modes, params.dt);
    SimulateOptions opts;
    opts.retain_noise = true;
    const Trajectory traj = engine.simulate(x0, path, opts);

    auto run_segment = [&](int from, int to, std::span<const double> dw_at_from,
                           std::vector<double>& out) {
        out.assign(traj.state(from).begin(), traj.state(from).end());
        std::vector<double> next(m);
        for (int j = from; j < to; ++j) {
            engine.begin_step(out, j == from ? dw_at_from : path.row(j), j);
            engine.state_step(next);
            out.swap(next);
        }
    };

    MalliavinCheckResult res;
    res.epsilon = epsilon;
    res.trials = trials;
    std::vector<double> theta(m), dw_plus(m), dw_minus(m), x_plus(m), x_minus(m);
    for (int t = 0; t < trials; ++t) {
        // Trial indices and direction from a dedicated counter namespace so
        // they never collide with the path's own stream.
        const std::uint64_t trial_stream = (1ull << 32) + static_cast<std::uint64_t>(t);
        const auto words = philox::block(
            {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
            {0x6d616c6cu, static_cast<std::uint32_t>(t), 0u, 0u});
        const int l = static_cast<int>(words[0] % static_cast<std::uint32_t>(n_steps));
        const int n = l + 1 + static_cast<int>(words[1] % static_cast<std::uint32_t>(n_steps - l));
        for (size_t i = 0; i < m; ++i) {
            theta[i] = standard_gaussian(seed, trial_stream, 0, static_cast<std::uint32_t>(i));
        }
        const Field theta_field = Field::from_modal(grid, theta);

        const Field deriv = malliavin_derivative(traj, l, n, theta_field, params);

        const auto dw = path.row(l);
        for (size_t i = 0; i < m; ++i) {
            dw_plus[i] = dw[i] + epsilon * theta[i];
            dw_minus[i] = dw[i] - epsilon * theta[i];
        }
        run_segment(l, n, dw_plus, x_plus);
        run_segment(l, n, dw_minus, x_minus);

        double num = 0.0, den = 0.0;
        const auto dm = deriv.modal();
        for (size_t i = 0; i < m; ++i) {
            const double fd = (x_plus[i] - x_minus[i]) / (2.0 * epsilon);
            const double d = fd - dm[i];
            num += d * d;
            den += dm[i] * dm[i];
        }
        const double rel = std::sqrt(num) / std::max(1e-300, std::sqrt(den));
        if (rel > res.max_rel_err) res.max_rel_err = rel;
    }
    return res;
}

DualityResult duality_check(const SchemeParams& params, const Field& x0, long samples,
                            const AdaptedProcess& psi, std::uint64_t seed) {
    if (samples < 2) throw std::invalid_argument("duality_check: samples must be >= 2");
    GridPtr grid = x0.grid_ptr();
    const size_t m = static_cast<size_t>(params.modes);
    const int n_steps = params.steps;

    std::vector<double> lhs_vals(static_cast<size_t>(samples));
    std::vector<double> rhs_vals(static_cast<size_t>(samples));
    std::vector<double> gap_vals(static_cast<size_t>(samples));

    parallel_for_blocks(samples, [&](long begin, long end) {
        Euler engine(grid, params);
        std::vector<double> psi_modal(m), seeded(m), xs(m), phi_grad_dir(m);
        std::vector<std::vector<double>> dirs(static_cast<size_t>(n_steps),
                                              std::vector<double>(m));
        for (long s = begin; s < end; ++s) {
            const NoisePath path = sample_path(seed, static_cast<std::uint64_t>(s), n_steps,
                                               params.modes, params.dt);
            SimulateOptions opts;
            opts.retain_noise = true;
            const Trajectory traj = engine.simulate(x0, path, opts);

            // Forward sweep: after processing step j, dirs[l] holds
            // Pi_{j:l+1} S e^{tau A} sigma(X_l) psi_l for every l <= j.
            double pairing = 0.0;
            for (int j = 0; j < n_steps; ++j) {
                engine.begin_step(traj.state(j), path.row(j), j);
                for (int l = 0; l < j; ++l) {
                    engine.tangent_step(dirs[static_cast<size_t>(l)],
                                        dirs[static_cast<size_t>(l)]);
                }
                psi(j, traj, psi_modal);
                engine.diffusion_map(psi_modal, dirs[static_cast<size_t>(j)]);
                const auto dw = path.row(j);
                for (size_t i = 0; i < m; ++i) pairing += psi_modal[i] * dw[i];
            }

            // phi_delta(X_N) and D phi_delta(X_N) . dir via the smoothed state.
            for (size_t i = 0; i < m; ++i) xs[i] = traj.state(n_steps)[i];
            if (params.reg.delta > 0.0) diag::semigroup(*grid, params.reg.delta, xs);
            const Field x_smooth = Field::from_modal(grid, xs);

            const double phi_val = kernels::functional_quadrature(
                *grid, params.bundle.phi(), 0, x_smooth.nodal(), {});
            const double lhs = phi_val * pairing;

            double rhs = 0.0;
            for (int l = 0; l < n_steps; ++l) {
                auto& d = dirs[static_cast<size_t>(l)];
                if (params.reg.delta > 0.0) diag::semigroup(*grid, params.reg.delta, d);
                grid->from_modal(d, phi_grad_dir);
                rhs += params.dt * kernels::functional_quadrature(*grid, params.bundle.phi(), 1,
                                                                  x_smooth.nodal(), phi_grad_dir);
            }

            lhs_vals[static_cast<size_t>(s)] = lhs;
            rhs_vals[static_cast<size_t>(s)] = rhs;
            gap_vals[static_cast<size_t>(s)] = lhs - rhs;
        }
    });

    DualityResult res;
    const auto lm = mean_stderr(lhs_vals);
    const auto rm = mean_stderr(rhs_vals);
    res.lhs = lm.mean;
    res.rhs = rm.mean;
    res.stderr_lhs = lm.stderr_of_mean;
    res.stderr_rhs = rm.stderr_of_mean;
    res.stderr_of_gap = mean_stderr(gap_vals).stderr_of_mean;
    res.samples = samples;
    return res;
}

}  // namespace spde
