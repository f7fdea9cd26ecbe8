#include "spde/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "spde/errors.hpp"
#include "spde/parallel.hpp"

namespace spde {

namespace {

// phi_delta(x) = phi(e^{delta A} x); derivatives act on smoothed directions.
double functional_smoothed(const SpectralGrid& g, const SchemeParams& params, int order,
                           std::span<const double> x_modal,
                           std::span<const std::vector<double>*> dirs_modal,
                           std::vector<double>& scratch_modal, std::vector<double>& x_nodal,
                           std::vector<double>& prod_nodal) {
    const size_t m = static_cast<size_t>(g.modes());
    for (size_t i = 0; i < m; ++i) scratch_modal[i] = x_modal[i];
    if (params.reg.delta > 0.0) diag::semigroup(g, params.reg.delta, scratch_modal);
    g.from_modal(scratch_modal, x_nodal);

    std::vector<double> dir_nodal(m);
    bool first = true;
    for (const auto* d : dirs_modal) {
        for (size_t i = 0; i < m; ++i) scratch_modal[i] = (*d)[i];
        if (params.reg.delta > 0.0) diag::semigroup(g, params.reg.delta, scratch_modal);
        g.from_modal(scratch_modal, dir_nodal);
        if (first) {
            prod_nodal = dir_nodal;
            first = false;
        } else {
            for (size_t i = 0; i < m; ++i) prod_nodal[i] *= dir_nodal[i];
        }
    }
    std::span<const double> prod = first ? std::span<const double>{} : prod_nodal;
    return kernels::functional_quadrature(g, params.bundle.phi(), order, x_nodal, prod);
}

McEstimate reduce_with_failures(std::vector<double>& values, std::vector<char>& failed) {
    long failures = 0;
    std::vector<double> ok;
    ok.reserve(values.size());
    for (size_t s = 0; s < values.size(); ++s) {
        if (failed[s]) {
            ++failures;
        } else {
            ok.push_back(values[s]);
        }
    }
    const auto ms = mean_stderr(ok);
    return {ms.mean, ms.stderr_of_mean, static_cast<long>(ok.size()), failures};
}

void check_samples(long samples) {
    if (samples < 2) throw std::invalid_argument("estimator: samples must be >= 2");
}

int level_ratio(double coarse_dt, double fine_dt) {
    const double q = coarse_dt / fine_dt;
    const int r = static_cast<int>(std::lround(q));
    if (r < 1 || std::abs(q - r) > 1e-9 * q) {
        throw std::invalid_argument("levels must be integer multiples of the finest level");
    }
    return r;
}

int steps_for(double T, double dt) {
    const double q = T / dt;
    const int n = static_cast<int>(std::lround(q));
    if (n < 1 || std::abs(q - n) > 1e-9 * q) {
        throw std::invalid_argument("horizon must be an integer multiple of every level dt");
    }
    return n;
}

}  // namespace

McEstimate estimate_u(const SchemeParams& params, const Field& x0, long samples,
                      std::uint64_t seed) {
    check_samples(samples);
    GridPtr grid = x0.grid_ptr();
    std::vector<double> values(static_cast<size_t>(samples));
    std::vector<char> failed(static_cast<size_t>(samples), 0);
    std::vector<double> x0m(x0.modal().begin(), x0.modal().end());

    parallel_for_blocks(samples, [&](long begin, long end) {
        Euler engine(grid, params);
        const size_t m = static_cast<size_t>(params.modes);
        std::vector<double> out(m), scratch(m), x_nodal(m), prod;
        for (long s = begin; s < end; ++s) {
            try {
                const NoisePath path = sample_path(seed, static_cast<std::uint64_t>(s),
                                                   params.steps, params.modes, params.dt);
                engine.run_terminal(x0m, path, out);
                values[static_cast<size_t>(s)] =
                    functional_smoothed(*grid, params, 0, out, {}, scratch, x_nodal, prod);
            } catch (const numerical_failure&) {
                failed[static_cast<size_t>(s)] = 1;
            }
        }
    });
    return reduce_with_failures(values, failed);
}

namespace {

McEstimate estimate_Du_impl(const SchemeParams& params, const Field& x0, const Field& h,
                            long samples, std::uint64_t seed, std::uint64_t index_offset) {
    check_samples(samples);
    GridPtr grid = x0.grid_ptr();
    std::vector<double> values(static_cast<size_t>(samples));
    std::vector<char> failed(static_cast<size_t>(samples), 0);
    std::vector<double> x0m(x0.modal().begin(), x0.modal().end());
    std::vector<double> hm(h.modal().begin(), h.modal().end());

    parallel_for_blocks(samples, [&](long begin, long end) {
        Euler engine(grid, params);
        const size_t m = static_cast<size_t>(params.modes);
        std::vector<double> x(m), eta(m), x_next(m), scratch(m), x_nodal(m), prod;
        for (long s = begin; s < end; ++s) {
            try {
                const NoisePath path =
                    sample_path(seed, index_offset + static_cast<std::uint64_t>(s), params.steps,
                                params.modes, params.dt);
                x = x0m;
                eta = hm;
                for (int n = 0; n < params.steps; ++n) {
                    engine.begin_step(x, path.row(n), n);
                    engine.tangent_step(eta, eta);
                    engine.state_step(x_next);
                    x.swap(x_next);
                }
                const std::vector<double>* dirs[] = {&eta};
                values[static_cast<size_t>(s)] =
                    functional_smoothed(*grid, params, 1, x, dirs, scratch, x_nodal, prod);
            } catch (const numerical_failure&) {
                failed[static_cast<size_t>(s)] = 1;
            }
        }
    });
    return reduce_with_failures(values, failed);
}

}  // namespace

McEstimate estimate_Du(const SchemeParams& params, const Field& x0, const Field& h, long samples,
                       std::uint64_t seed) {
    return estimate_Du_impl(params, x0, h, samples, seed, 0);
}

McEstimate estimate_D2u(const SchemeParams& params, const Field& x0, const Field& h,
                        const Field& k, long samples, std::uint64_t seed) {
    check_samples(samples);
    GridPtr grid = x0.grid_ptr();
    std::vector<double> values(static_cast<size_t>(samples));
    std::vector<char> failed(static_cast<size_t>(samples), 0);
    std::vector<double> x0m(x0.modal().begin(), x0.modal().end());
    std::vector<double> hm(h.modal().begin(), h.modal().end());
    std::vector<double> km(k.modal().begin(), k.modal().end());

    parallel_for_blocks(samples, [&](long begin, long end) {
        Euler engine(grid, params);
        const size_t m = static_cast<size_t>(params.modes);
        std::vector<double> x(m), eta_h(m), eta_k(m), zeta(m), x_next(m);
        std::vector<double> scratch(m), x_nodal(m), prod;
        for (long s = begin; s < end; ++s) {
            try {
                const NoisePath path = sample_path(seed, static_cast<std::uint64_t>(s),
                                                   params.steps, params.modes, params.dt);
                x = x0m;
                eta_h = hm;
                eta_k = km;
                std::fill(zeta.begin(), zeta.end(), 0.0);
                for (int n = 0; n < params.steps; ++n) {
                    engine.begin_step(x, path.row(n), n);
                    // zeta consumes eta at step n, so it updates first.
                    engine.second_variation_step(zeta, eta_h, eta_k, zeta);
                    engine.tangent_step(eta_h, eta_h);
                    engine.tangent_step(eta_k, eta_k);
                    engine.state_step(x_next);
                    x.swap(x_next);
                }
                const std::vector<double>* dirs2[] = {&eta_h, &eta_k};
                const std::vector<double>* dirs1[] = {&zeta};
                values[static_cast<size_t>(s)] =
                    functional_smoothed(*grid, params, 2, x, dirs2, scratch, x_nodal, prod) +
                    functional_smoothed(*grid, params, 1, x, dirs1, scratch, x_nodal, prod);
            } catch (const numerical_failure&) {
                failed[static_cast<size_t>(s)] = 1;
            }
        }
    });
    return reduce_with_failures(values, failed);
}

namespace {

struct CurveAccumulator {
    // values[level][sample]
    std::vector<std::vector<double>> values;
};

// Shared driver: per sample, simulate the finest level once and every listed
// level from the coarsened path; `record` maps (level state, ref state) to the
// per-sample statistic.
template <typename Record>
void coupled_sweep(const SchemeParams& params_base, const Field& x0,
                   std::span<const double> levels, long samples, std::uint64_t seed,
                   size_t n_report, CurveAccumulator& acc, Record record) {
    const double T = params_base.horizon();
    if (levels.empty()) throw std::invalid_argument("error curve: empty level list");
    for (size_t j = 0; j + 1 < levels.size(); ++j) {
        if (levels[j] < levels[j + 1]) {
            throw std::invalid_argument("error curve: levels must be sorted descending");
        }
    }
    const double fine_dt = levels.back();
    const int fine_steps = steps_for(T, fine_dt);
    std::vector<int> ratios;
    for (double dt : levels) ratios.push_back(level_ratio(dt, fine_dt));

    GridPtr grid = x0.grid_ptr();
    acc.values.assign(n_report, std::vector<double>(static_cast<size_t>(samples)));
    std::vector<double> x0m(x0.modal().begin(), x0.modal().end());

    parallel_for_blocks(samples, [&](long begin, long end) {
        SchemeParams fine_params = params_base;
        fine_params.dt = fine_dt;
        fine_params.steps = fine_steps;
        Euler fine_engine(grid, fine_params);
        const size_t m = static_cast<size_t>(params_base.modes);
        std::vector<double> ref(m), lvl(m);
        for (long s = begin; s < end; ++s) {
            const NoisePath fine_path =
                sample_path(seed, static_cast<std::uint64_t>(s), fine_steps, params_base.modes,
                            fine_dt);
            fine_engine.run_terminal(x0m, fine_path, ref);
            for (size_t j = 0; j < n_report; ++j) {
                if (ratios[j] == 1) {
                    lvl = ref;
                } else {
                    const NoisePath coarse = coarsen(fine_path, ratios[j]);
                    SchemeParams lp = params_base;
                    lp.dt = coarse.dt;
                    lp.steps = coarse.steps;
                    Euler level_engine(grid, lp);
                    level_engine.run_terminal(x0m, coarse, lvl);
                }
                acc.values[j][static_cast<size_t>(s)] = record(lvl, ref);
            }
        }
    });
}

}  // namespace

std::vector<ErrorLevel> weak_error_curve(const SchemeParams& params_base, const Field& x0,
                                         std::span<const double> levels, long samples,
                                         WeakReference reference, std::uint64_t seed) {
    check_samples(samples);
    GridPtr grid = x0.grid_ptr();
    const size_t m = static_cast<size_t>(params_base.modes);

    const bool closed = (reference == WeakReference::closed_form);
    if (closed && !(params_base.bundle.is_linear_additive() && params_base.bundle.phi_is_square())) {
        throw std::invalid_argument(
            "weak_error_curve: closed_form reference requires a linear-additive bundle with "
            "phi(u) = u^2");
    }
    const size_t n_report = closed ? levels.size() : levels.size() - 1;
    if (n_report == 0) throw std::invalid_argument("weak_error_curve: no reportable levels");

    // phi evaluation is cheap; reuse one scratch set per thread via locals.
    CurveAccumulator acc;
    SchemeParams pb = params_base;
    coupled_sweep(pb, x0, levels, samples, seed, n_report, acc,
                  [&](std::span<const double> lvl, std::span<const double> ref) {
                      std::vector<double> scratch(m), x_nodal(m), prod;
                      const double phi_lvl =
                          functional_smoothed(*grid, pb, 0, lvl, {}, scratch, x_nodal, prod);
                      if (closed) return phi_lvl;
                      const double phi_ref =
                          functional_smoothed(*grid, pb, 0, ref, {}, scratch, x_nodal, prod);
                      return phi_lvl - phi_ref;
                  });

    std::vector<ErrorLevel> out;
    for (size_t j = 0; j < n_report; ++j) {
        const auto ms = mean_stderr(acc.values[j]);
        double err = ms.mean;
        if (closed) {
            err -= closed_form_u_continuum(params_base, x0, params_base.horizon());
        }
        out.push_back({levels[j], std::abs(err), ms.stderr_of_mean, samples});
    }
    return out;
}

std::vector<ErrorLevel> strong_error_curve(const SchemeParams& params_base, const Field& x0,
                                           std::span<const double> levels, long samples,
                                           std::uint64_t seed) {
    check_samples(samples);
    if (levels.size() < 2) throw std::invalid_argument("strong_error_curve: need >= 2 levels");
    const size_t n_report = levels.size() - 1;

    CurveAccumulator acc;
    coupled_sweep(params_base, x0, levels, samples, seed, n_report, acc,
                  [](std::span<const double> lvl, std::span<const double> ref) {
                      double sq = 0.0;
                      for (size_t i = 0; i < lvl.size(); ++i) {
                          const double d = lvl[i] - ref[i];
                          sq += d * d;
                      }
                      return sq;
                  });

    std::vector<ErrorLevel> out;
    for (size_t j = 0; j < n_report; ++j) {
        const auto ms = mean_stderr(acc.values[j]);
        const double rms = std::sqrt(std::max(0.0, ms.mean));
        // Delta method: d sqrt(m) / dm = 1 / (2 sqrt(m)).
        const double se = rms > 0.0 ? ms.stderr_of_mean / (2.0 * rms) : 0.0;
        out.push_back({levels[j], rms, se, samples});
    }
    return out;
}

RateEstimate fit_rate(std::span<const ErrorLevel> levels) {
    if (levels.size() < 3) throw std::invalid_argument("fit_rate: need at least 3 levels");
    const size_t n = levels.size();
    std::vector<double> xs(n), ys(n);
    for (size_t i = 0; i < n; ++i) {
        if (!(levels[i].error > 0.0)) {
            throw std::invalid_argument("fit_rate: all errors must be positive");
        }
        xs[i] = std::log(levels[i].dt);
        ys[i] = std::log(levels[i].error);
    }
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_rate: degenerate dt levels");

    RateEstimate est;
    est.slope = sxy / sxx;
    est.intercept = my - est.slope * mx;
    double ssr = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (est.intercept + est.slope * xs[i]);
        ssr += r * r;
    }
    est.r_squared = (syy > 0.0) ? 1.0 - ssr / syy : 1.0;
    est.slope_stderr = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    est.levels.assign(levels.begin(), levels.end());
    return est;
}

RegularityProbeResult regularity_probe(const SchemeParams& params_per_level, const Field& x0,
                                       const Field& h_raw, double beta,
                                       std::span<const double> t_grid, long samples,
                                       std::uint64_t seed) {
    if (beta < 0.0 || beta >= 1.0) {
        throw std::invalid_argument("regularity_probe: beta must lie in [0, 1)");
    }
    for (size_t j = 0; j + 1 < t_grid.size(); ++j) {
        if (t_grid[j] <= t_grid[j + 1]) {
            throw std::invalid_argument("regularity_probe: T grid must be decreasing");
        }
    }
    const Field h = apply_frac_power(beta, h_raw);

    RegularityProbeResult res;
    res.beta = beta;
    std::vector<ErrorLevel> levels;
    for (size_t j = 0; j < t_grid.size(); ++j) {
        SchemeParams p = params_per_level;
        p.dt = t_grid[j] / params_per_level.steps;
        // Independent streams per level: offset the sample index block.
        const std::uint64_t level_offset =
            static_cast<std::uint64_t>(j) * static_cast<std::uint64_t>(samples);
        McEstimate du = estimate_Du_impl(p, x0, h, samples, seed, level_offset);
        levels.push_back({t_grid[j], std::abs(du.mean), du.stderr_of_mean, du.samples});
        if (du.stderr_of_mean > 0.5 * std::abs(du.mean)) res.reliable = false;
    }
    res.fit = fit_rate(levels);
    res.fitted_exponent = -res.fit.slope;
    return res;
}

double closed_form_u_discrete(const SchemeParams& params, const Field& x0) {
    if (!params.bundle.is_linear_additive() || !params.bundle.phi_is_square()) {
        throw std::invalid_argument("closed_form_u_discrete: linear-additive with phi=u^2 only");
    }
    const double c = params.bundle.constant_sigma();
    const auto lam = x0.grid().eigenvalues();
    const auto x0m = x0.modal();
    double total = 0.0;
    for (size_t i = 0; i < lam.size(); ++i) {
        const double r = 1.0 / (1.0 + params.dt * lam[i]);
        const double r2 = r * r;
        const double r2n = std::pow(r2, params.steps);
        total += x0m[i] * x0m[i] * r2n;
        total += c * c * params.dt * r2 * (1.0 - r2n) / (1.0 - r2);
    }
    return total;
}

double closed_form_u_continuum(const SchemeParams& params, const Field& x0, double T) {
    if (!params.bundle.is_linear_additive() || !params.bundle.phi_is_square()) {
        throw std::invalid_argument("closed_form_u_continuum: linear-additive with phi=u^2 only");
    }
    const double c = params.bundle.constant_sigma();
    const auto lam = x0.grid().eigenvalues();
    const auto x0m = x0.modal();
    double total = 0.0;
    for (size_t i = 0; i < lam.size(); ++i) {
        const double e2 = std::exp(-2.0 * lam[i] * T);
        total += x0m[i] * x0m[i] * e2;
        total += c * c * (1.0 - e2) / (2.0 * lam[i]);
    }
    return total;
}

}  // namespace spde
