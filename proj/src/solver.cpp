#include "spde/solver.hpp"

#include <cmath>
#include <stdexcept>

#include "spde/parallel.hpp"

namespace spde {

Euler::Euler(GridPtr grid, SchemeParams params) : grid_(std::move(grid)), params_(std::move(params)) {
    if (params_.dt <= 0.0) throw std::invalid_argument("Euler: dt must be > 0");
    if (params_.modes != grid_->modes()) throw std::invalid_argument("Euler: modes mismatch");
    const size_t m = static_cast<size_t>(params_.modes);
    x_modal_.resize(m);
    xs_modal_.resize(m);
    xs_nodal_.resize(m);
    dw_modal_.resize(m);
    dws_modal_.resize(m);
    dws_nodal_.resize(m);
    zs_modal_.resize(m);
    zs_nodal_.resize(m);
    prod_.resize(m);
    drift_.resize(m);
    noise_nodal_.resize(m);
    noise_modal_.resize(m);
    sum_.resize(m);
    src_drift_.resize(m);
    src_noise_.resize(m);
    scratch_.ensure(params_.modes);
}

void Euler::smoothed_pair(std::span<const double> modal_in, std::vector<double>& modal_out,
                          std::vector<double>& nodal_out) const {
    for (size_t i = 0; i < modal_out.size(); ++i) modal_out[i] = modal_in[i];
    if (params_.reg.delta > 0.0) diag::semigroup(*grid_, params_.reg.delta, modal_out);
    grid_->from_modal(modal_out, nodal_out);
}

void Euler::check_finite(std::span<const double> v) const {
    for (double a : v) {
        if (!std::isfinite(a)) {
            throw numerical_failure(step_index_, "nonfinite state at step " +
                                                     std::to_string(step_index_));
        }
    }
}

void Euler::begin_step(std::span<const double> x_modal, std::span<const double> dw_modal,
                       int step_index) {
    const size_t m = static_cast<size_t>(params_.modes);
    if (x_modal.size() != m || dw_modal.size() != m) {
        throw std::invalid_argument("begin_step: modal size mismatch");
    }
    step_index_ = step_index;
    for (size_t i = 0; i < m; ++i) x_modal_[i] = x_modal[i];
    for (size_t i = 0; i < m; ++i) dw_modal_[i] = dw_modal[i];
    smoothed_pair(x_modal_, xs_modal_, xs_nodal_);
    smoothed_pair(dw_modal_, dws_modal_, dws_nodal_);
}

void Euler::forcing_modal(std::span<double> out_modal) {
    const size_t m = static_cast<size_t>(params_.modes);
    const auto& g = *grid_;
    const auto& reg = params_.reg;

    for (size_t i = 0; i < m; ++i) drift_[i] = 0.0;
    kernels::accumulate_drift_modal(g, params_.bundle, 0, xs_nodal_, {}, reg.delta, drift_,
                                    scratch_);

    kernels::diffusion_nodal(params_.bundle, 0, xs_nodal_, {}, dws_nodal_, noise_nodal_);
    g.to_modal(noise_nodal_, noise_modal_);
    if (reg.delta > 0.0) diag::semigroup(g, reg.delta, noise_modal_);
    if (reg.tau > 0.0) diag::semigroup(g, reg.tau, noise_modal_);

    for (size_t i = 0; i < m; ++i) out_modal[i] = params_.dt * drift_[i] + noise_modal_[i];
}

void Euler::state_step(std::span<double> out_modal) {
    const size_t m = static_cast<size_t>(params_.modes);
    forcing_modal(sum_);
    for (size_t i = 0; i < m; ++i) out_modal[i] = x_modal_[i] + sum_[i];
    diag::resolvent(*grid_, params_.dt, out_modal);
    check_finite(out_modal);
}

void Euler::tangent_source_split(std::span<const double> z_modal, std::span<double> drift_out,
                                 std::span<double> noise_out) {
    const size_t m = static_cast<size_t>(params_.modes);
    const auto& g = *grid_;
    const auto& reg = params_.reg;

    smoothed_pair(z_modal, zs_modal_, zs_nodal_);

    for (size_t i = 0; i < m; ++i) drift_[i] = 0.0;
    kernels::accumulate_drift_modal(g, params_.bundle, 1, xs_nodal_, zs_nodal_, reg.delta, drift_,
                                    scratch_);
    for (size_t i = 0; i < m; ++i) drift_out[i] = params_.dt * drift_[i];
    diag::resolvent(g, params_.dt, drift_out);

    kernels::diffusion_nodal(params_.bundle, 1, xs_nodal_, zs_nodal_, dws_nodal_, noise_nodal_);
    g.to_modal(noise_nodal_, noise_out);
    if (reg.delta > 0.0) diag::semigroup(g, reg.delta, noise_out);
    if (reg.tau > 0.0) diag::semigroup(g, reg.tau, noise_out);
    diag::resolvent(g, params_.dt, noise_out);
}

void Euler::tangent_step(std::span<const double> z_modal, std::span<double> out_modal) {
    const size_t m = static_cast<size_t>(params_.modes);
    const auto& g = *grid_;
    const auto& reg = params_.reg;

    smoothed_pair(z_modal, zs_modal_, zs_nodal_);

    for (size_t i = 0; i < m; ++i) drift_[i] = 0.0;
    kernels::accumulate_drift_modal(g, params_.bundle, 1, xs_nodal_, zs_nodal_, reg.delta, drift_,
                                    scratch_);

    kernels::diffusion_nodal(params_.bundle, 1, xs_nodal_, zs_nodal_, dws_nodal_, noise_nodal_);
    g.to_modal(noise_nodal_, noise_modal_);
    if (reg.delta > 0.0) diag::semigroup(g, reg.delta, noise_modal_);
    if (reg.tau > 0.0) diag::semigroup(g, reg.tau, noise_modal_);

    for (size_t i = 0; i < m; ++i) {
        out_modal[i] = z_modal[i] + params_.dt * drift_[i] + noise_modal_[i];
    }
    diag::resolvent(g, params_.dt, out_modal);
}

void Euler::second_source_split(std::span<const double> eta_h_modal,
                                std::span<const double> eta_k_modal, std::span<double> drift_out,
                                std::span<double> noise_out) {
    const size_t m = static_cast<size_t>(params_.modes);
    const auto& g = *grid_;
    const auto& reg = params_.reg;

    // Product of the smoothed tangent directions; dws_modal_ doubles as
    // scratch and is restored before the diffusion product needs it.
    smoothed_pair(eta_h_modal, zs_modal_, zs_nodal_);
    smoothed_pair(eta_k_modal, dws_modal_, prod_);
    for (size_t i = 0; i < m; ++i) prod_[i] *= zs_nodal_[i];
    smoothed_pair(dw_modal_, dws_modal_, dws_nodal_);

    for (size_t i = 0; i < m; ++i) drift_[i] = 0.0;
    kernels::accumulate_drift_modal(g, params_.bundle, 2, xs_nodal_, prod_, reg.delta, drift_,
                                    scratch_);
    for (size_t i = 0; i < m; ++i) drift_out[i] = params_.dt * drift_[i];
    diag::resolvent(g, params_.dt, drift_out);

    kernels::diffusion_nodal(params_.bundle, 2, xs_nodal_, prod_, dws_nodal_, noise_nodal_);
    g.to_modal(noise_nodal_, noise_out);
    if (reg.delta > 0.0) diag::semigroup(g, reg.delta, noise_out);
    if (reg.tau > 0.0) diag::semigroup(g, reg.tau, noise_out);
    diag::resolvent(g, params_.dt, noise_out);
}

void Euler::second_variation_step(std::span<const double> zeta_modal,
                                  std::span<const double> eta_h_modal,
                                  std::span<const double> eta_k_modal,
                                  std::span<double> out_modal) {
    const size_t m = static_cast<size_t>(params_.modes);
    tangent_step(zeta_modal, out_modal);
    second_source_split(eta_h_modal, eta_k_modal, src_drift_, src_noise_);
    for (size_t i = 0; i < m; ++i) out_modal[i] += src_drift_[i] + src_noise_[i];
}

void Euler::diffusion_map(std::span<const double> theta_modal, std::span<double> out_modal) {
    const auto& g = *grid_;
    const auto& reg = params_.reg;
    smoothed_pair(theta_modal, zs_modal_, zs_nodal_);
    kernels::diffusion_nodal(params_.bundle, 0, xs_nodal_, {}, zs_nodal_, noise_nodal_);
    g.to_modal(noise_nodal_, out_modal);
    if (reg.delta > 0.0) diag::semigroup(g, reg.delta, out_modal);
    if (reg.tau > 0.0) diag::semigroup(g, reg.tau, out_modal);
    diag::resolvent(g, params_.dt, out_modal);
}

Field Euler::step(const Field& x, const Field& dw, int step_index) {
    if (x.grid().modes() != params_.modes || dw.grid().modes() != params_.modes) {
        throw std::invalid_argument("step: grid mismatch");
    }
    begin_step(x.modal(), dw.modal(), step_index);
    std::vector<double> out(static_cast<size_t>(params_.modes));
    state_step(out);
    return Field::from_modal(grid_, std::move(out));
}

Trajectory Euler::simulate(const Field& x0, const NoisePath& path, SimulateOptions opts) {
    const int m = params_.modes;
    const int n_steps = path.steps;
    if (path.modes != m) throw std::invalid_argument("simulate: path modes mismatch");
    if (path.dt != params_.dt) throw std::invalid_argument("simulate: path dt mismatch");

    Trajectory traj;
    traj.grid = grid_;
    traj.steps = n_steps;
    traj.modes = m;
    traj.states.resize(static_cast<size_t>(n_steps + 1) * m);
    auto x0m = x0.modal();
    for (int i = 0; i < m; ++i) traj.states[static_cast<size_t>(i)] = x0m[static_cast<size_t>(i)];

    for (int n = 0; n < n_steps; ++n) {
        auto cur = traj.state(n);
        begin_step(cur, path.row(n), n);
        std::span<double> next{traj.states.data() + static_cast<size_t>(n + 1) * m,
                               static_cast<size_t>(m)};
        state_step(next);
    }

    if (opts.validate_mild && n_steps > 0) {
        // X_N = S^N x0 + sum_j S^{N-j} [dt G_delta(X_j) + e^{tau A} sigma_delta(X_j) dW_j]
        std::vector<double> mild(x0m.begin(), x0m.end());
        const auto lam = grid_->eigenvalues();
        for (int i = 0; i < m; ++i) {
            mild[static_cast<size_t>(i)] *=
                std::pow(1.0 / (1.0 + params_.dt * lam[static_cast<size_t>(i)]), n_steps);
        }
        std::vector<double> forcing(static_cast<size_t>(m));
        for (int j = 0; j < n_steps; ++j) {
            begin_step(traj.state(j), path.row(j), j);
            forcing_modal(forcing);
            for (int i = 0; i < m; ++i) {
                const double r = 1.0 / (1.0 + params_.dt * lam[static_cast<size_t>(i)]);
                mild[static_cast<size_t>(i)] +=
                    std::pow(r, n_steps - j) * forcing[static_cast<size_t>(i)];
            }
        }
        double num = 0.0, den = 0.0;
        auto fin = traj.state(n_steps);
        for (int i = 0; i < m; ++i) {
            const double d = mild[static_cast<size_t>(i)] - fin[static_cast<size_t>(i)];
            num += d * d;
            den += fin[static_cast<size_t>(i)] * fin[static_cast<size_t>(i)];
        }
        if (std::sqrt(num) > opts.mild_rel_tol * std::max(1e-300, std::sqrt(den))) {
            throw numerical_failure(n_steps, "mild-form cross-check failed");
        }
    }

    if (opts.retain_noise) traj.noise = path;
    return traj;
}

void Euler::run_terminal(std::span<const double> x0_modal, const NoisePath& path,
                         std::span<double> out_modal) {
    const size_t m = static_cast<size_t>(params_.modes);
    if (path.dt != params_.dt) throw std::invalid_argument("run_terminal: path dt mismatch");
    std::vector<double> cur(x0_modal.begin(), x0_modal.end());
    for (int n = 0; n < path.steps; ++n) {
        begin_step(cur, path.row(n), n);
        state_step(out_modal);
        for (size_t i = 0; i < m; ++i) cur[i] = out_modal[i];
    }
    for (size_t i = 0; i < m; ++i) out_modal[i] = cur[i];
}

std::pair<Field, Field> Euler::simulate_coupled(const Field& x0, const NoisePath& fine_path,
                                                int r) {
    const size_t m = static_cast<size_t>(params_.modes);
    std::vector<double> fine_out(m), coarse_out(m);
    run_terminal(x0.modal(), fine_path, fine_out);

    const NoisePath coarse_path = coarsen(fine_path, r);
    SchemeParams coarse_params = params_;
    coarse_params.dt = coarse_path.dt;
    coarse_params.steps = coarse_path.steps;
    Euler coarse_engine(grid_, coarse_params);
    coarse_engine.run_terminal(x0.modal(), coarse_path, coarse_out);

    return {Field::from_modal(grid_, std::move(fine_out)),
            Field::from_modal(grid_, std::move(coarse_out))};
}

McEstimate moment_probe(const SchemeParams& params, const Field& x0, long samples, double alpha,
                        std::uint64_t seed) {
    if (alpha < 0.0 || alpha >= 0.25) {
        throw std::invalid_argument("moment_probe: alpha must lie in [0, 1/4)");
    }
    GridPtr grid = x0.grid_ptr();
    std::vector<double> values(static_cast<size_t>(samples));
    std::vector<double> x0m(x0.modal().begin(), x0.modal().end());

    parallel_for_blocks(samples, [&](long begin, long end) {
        Euler engine(grid, params);
        const size_t m = static_cast<size_t>(params.modes);
        std::vector<double> out(m);
        const auto lam = grid->eigenvalues();
        for (long s = begin; s < end; ++s) {
            const NoisePath path =
                sample_path(seed, static_cast<std::uint64_t>(s), params.steps, params.modes,
                            params.dt);
            engine.run_terminal(x0m, path, out);
            double acc = 0.0;
            for (size_t i = 0; i < m; ++i) {
                acc += std::pow(lam[i], 2.0 * alpha) * out[i] * out[i];
            }
            values[static_cast<size_t>(s)] = acc;
        }
    });

    const auto ms = mean_stderr(values);
    return {ms.mean, ms.stderr_of_mean, samples, 0};
}

}  // namespace spde
