#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "spde/solver.hpp"

namespace spde {

/// Pi_n applied to z: the one-step linearization of the scheme at (X_n, dW_n).
/// Linear in z; step_eta is the same operator (eta_{n+1} = Pi_n eta_n).
Field pi_apply(const Field& x_n, const Field& dw_n, const Field& z, const SchemeParams& params);

Field step_eta(const Field& eta_n, const Field& x_n, const Field& dw_n,
               const SchemeParams& params);

Field step_zeta(const Field& zeta_n, const Field& eta_h_n, const Field& eta_k_n, const Field& x_n,
                const Field& dw_n, const SchemeParams& params);

/// Discrete two-sided sums evaluated directly (term-by-term forward products
/// of Pi), independent of the recursion path:
///   drift_part = dt sum_l Pi_{N-1:l+1} S G'(X_l) . S^l h
///   noise_part = sum_l Pi_{N-1:l+1} S e^{tau A} (sigma'(X_l) . S^l h) dW_l
/// so that eta_N = S^N h + drift_part + noise_part.
struct TwoSidedParts {
    Field drift_part;
    Field noise_part;
};

TwoSidedParts two_sided_eta(const Trajectory& traj, const Field& h, const SchemeParams& params);

/// Same decomposition for the second variation:
///   zeta_N = drift_part + noise_part with sources G''(X_l).(eta_l^h, eta_l^k)
/// and sigma''(X_l).(eta_l^h, eta_l^k) dW_l.
TwoSidedParts two_sided_zeta(const Trajectory& traj, const Field& h, const Field& k,
                             const SchemeParams& params);

/// D_s X_n for s in the step-l interval, applied to theta:
///   Pi_{n-1:l+1} S_dt e^{tau A} sigma_delta(X_l) theta,
/// by forward iteration from step l+1. Zero when l >= n; requires the
/// trajectory to retain its noise.
Field malliavin_derivative(const Trajectory& traj, int l, int n, const Field& theta,
                           const SchemeParams& params);

/// Adapted step process for the duality check: fills psi_n (modal) from the
/// step index and the trajectory. Caller contract: must only read states up
/// to index n (adaptedness is not detectable here).
using AdaptedProcess = std::function<void(int n, const Trajectory& traj, std::span<double> psi_modal)>;

struct DualityResult {
    double lhs = 0.0;   // E[ phi(X_N) sum_n <psi_n, dW_n> ]
    double rhs = 0.0;   // E[ sum_n dt <D_{t_n} phi(X_N), psi_n> ]
    double stderr_lhs = 0.0;
    double stderr_rhs = 0.0;
    double stderr_of_gap = 0.0;  // standard error of the per-sample difference
    long samples = 0;
};

DualityResult duality_check(const SchemeParams& params, const Field& x0, long samples,
                            const AdaptedProcess& psi, std::uint64_t seed);

/// Cross-check of malliavin_derivative against the pathwise central
/// difference of X_n in the dW_l direction: `trials` random (l, n, theta)
/// triples on one simulated path, reporting the worst relative L2 error.
struct MalliavinCheckResult {
    double max_rel_err = 0.0;
    double epsilon = 0.0;
    int trials = 0;
};

MalliavinCheckResult malliavin_fd_check(const SchemeParams& params, const Field& x0, int trials,
                                        double epsilon, std::uint64_t seed);

}  // namespace spde
