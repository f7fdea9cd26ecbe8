#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spde/solver.hpp"

namespace spde {

struct ErrorLevel {
    double dt = 0.0;
    double error = 0.0;
    double stderr_of_error = 0.0;
    long samples = 0;
};

/// Ordinary least squares on (log dt, log error).
struct RateEstimate {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_stderr = 0.0;
    std::vector<ErrorLevel> levels;
};

/// u(T, x) = E[phi_delta(X_N)]; Monte Carlo with per-sample counter streams,
/// deterministic for a given (seed, samples) regardless of thread count.
McEstimate estimate_u(const SchemeParams& params, const Field& x0, long samples,
                      std::uint64_t seed);

/// Du(T, x).h = E[D phi_delta(X_N) . eta_N^h] with the common-path tangent.
McEstimate estimate_Du(const SchemeParams& params, const Field& x0, const Field& h, long samples,
                       std::uint64_t seed);

/// D2u(T, x).(h, k) = E[D2 phi.(eta^h, eta^k)] + E[D phi . zeta^{h,k}].
McEstimate estimate_D2u(const SchemeParams& params, const Field& x0, const Field& h,
                        const Field& k, long samples, std::uint64_t seed);

enum class WeakReference { closed_form, finest_level };

/// Per-level weak error |E phi(X_level) - reference| with common-random-number
/// coupling: one fine path per sample at the finest listed dt, coarsened to
/// each level. With finest_level the last (finest) entry acts as the
/// reference and is not reported; with closed_form every level is reported
/// against the analytic value (linear-additive bundles only).
std::vector<ErrorLevel> weak_error_curve(const SchemeParams& params_base, const Field& x0,
                                         std::span<const double> levels, long samples,
                                         WeakReference reference, std::uint64_t seed);

/// Per-level strong error (E |X_level - X_ref|_{L2}^2)^{1/2} with the same
/// coupling; the finest listed level is the reference.
std::vector<ErrorLevel> strong_error_curve(const SchemeParams& params_base, const Field& x0,
                                           std::span<const double> levels, long samples,
                                           std::uint64_t seed);

RateEstimate fit_rate(std::span<const ErrorLevel> levels);

/// Singularity probe for the Kolmogorov derivative bounds: estimates
/// |Du(T, x).h| over a decreasing T grid with h = (-A)^beta h_raw (fixed
/// |(-A)^{-beta} h|), and fits ln|Du| against ln T. The fitted exponent is
/// -slope; the bounds being probed are upper bounds only, so wide tolerances apply.
/// Each level runs a fixed step count (params.steps) so dt scales with T,
/// with independent streams derived from (seed, level index).
struct RegularityProbeResult {
    RateEstimate fit;
    double beta = 0.0;
    double fitted_exponent = 0.0;
    /// False when MC noise dominates (stderr > 0.5 |mean| at some level).
    bool reliable = true;
};

RegularityProbeResult regularity_probe(const SchemeParams& params_per_level, const Field& x0,
                                       const Field& h_raw, double beta,
                                       std::span<const double> t_grid, long samples,
                                       std::uint64_t seed);

/// Closed forms for the linear-additive configuration (G = 0, sigma constant,
/// phi(u) = u^2), truncated at the grid's M modes.
/// Discrete scheme: E|X_N|^2 = sum_i [ x0_i^2 r_i^{2N} + c^2 dt r_i^2 (1-r_i^{2N})/(1-r_i^2) ].
double closed_form_u_discrete(const SchemeParams& params, const Field& x0);
/// Continuum: E|X(T)|^2 = sum_i [ x0_i^2 e^{-2 lam_i T} + c^2 (1-e^{-2 lam_i T})/(2 lam_i) ].
double closed_form_u_continuum(const SchemeParams& params, const Field& x0, double T);

}  // namespace spde
