#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "spde/coefficients.hpp"
#include "spde/errors.hpp"
#include "spde/noise.hpp"
#include "spde/spectral.hpp"

namespace spde {

/// Time-stepping configuration. The horizon is defined as the exact binary
/// product steps * dt.
struct SchemeParams {
    double dt = 0.0;
    int steps = 0;
    int modes = 0;
    RegularizationParams reg;
    CoefficientBundle bundle;

    double horizon() const { return dt * steps; }
};

struct Trajectory {
    GridPtr grid;
    int steps = 0;
    int modes = 0;
    std::vector<double> states;  // (steps+1) x modes, modal
    std::optional<NoisePath> noise;

    std::span<const double> state(int n) const {
        return {states.data() + static_cast<size_t>(n) * modes, static_cast<size_t>(modes)};
    }
    Field state_field(int n) const {
        auto s = state(n);
        return Field::from_modal(grid, std::vector<double>(s.begin(), s.end()));
    }
};

struct SimulateOptions {
    bool retain_noise = false;
    /// Cross-check the iterated states against the mild (variation of
    /// constants) form at the final step; O(N^2), intended for small N.
    bool validate_mild = false;
    double mild_rel_tol = 1e-9;
};

/// Semi-implicit Euler engine for
///   X_{n+1} = S_dt X_n + dt S_dt G_delta(X_n) + e^{tau A} S_dt sigma_delta(X_n) dW_n,
/// with S_dt = (I - dt A)^{-1}. Nonlinearities are evaluated pseudo-spectrally
/// on the collocation nodes; all diagonal operators act modally.
///
/// An engine holds per-step scratch and is not thread-safe: use one instance
/// per thread. All operations are deterministic functions of their inputs.
class Euler {
public:
    Euler(GridPtr grid, SchemeParams params);

    const SpectralGrid& grid() const { return *grid_; }
    GridPtr grid_ptr() const { return grid_; }
    const SchemeParams& params() const { return params_; }

    /// Prepare the shared per-step context from the current state and the
    /// modal noise increments (both length M). Tangent/second-variation
    /// updates for the same step reuse this context.
    void begin_step(std::span<const double> x_modal, std::span<const double> dw_modal,
                    int step_index = -1);

    /// X_{n+1} from the prepared context; throws numerical_failure on
    /// nonfinite output.
    void state_step(std::span<double> out_modal);

    /// Pi_n z = S_dt z + dt S_dt G_delta'(X_n).z + e^{tau A} S_dt (sigma_delta'(X_n).z) dW_n.
    void tangent_step(std::span<const double> z_modal, std::span<double> out_modal);

    /// The two source pieces of Pi_n z separately (both resolvent-applied):
    /// drift_out = dt S G'_delta(X_n).z, noise_out = e^{tau A} S (sigma'_delta(X_n).z) dW_n.
    void tangent_source_split(std::span<const double> z_modal, std::span<double> drift_out,
                              std::span<double> noise_out);

    /// Second-derivative sources of the zeta recursion, separately:
    /// drift_out = dt S G''(X).(eta_h, eta_k), noise_out = e^{tau A} S (sigma''(X).(eta_h, eta_k)) dW_n.
    void second_source_split(std::span<const double> eta_h_modal,
                             std::span<const double> eta_k_modal, std::span<double> drift_out,
                             std::span<double> noise_out);

    /// e^{tau A} S_dt sigma_delta(X_n) theta from the context; the seed of
    /// the Malliavin derivative recursion.
    void diffusion_map(std::span<const double> theta_modal, std::span<double> out_modal);

    /// zeta update: Pi_n zeta plus the second-derivative sources
    /// dt S G''(X).(eta_h, eta_k) and e^{tau A} S (sigma''(X).(eta_h, eta_k)) dW_n.
    void second_variation_step(std::span<const double> zeta_modal,
                               std::span<const double> eta_h_modal,
                               std::span<const double> eta_k_modal, std::span<double> out_modal);

    /// dt G_delta(X_n) + e^{tau A} sigma_delta(X_n) dW_n from the context
    /// (the pre-resolvent forcing; the state step is S_dt (x + forcing)).
    void forcing_modal(std::span<double> out_modal);

    /// One-shot step on Fields.
    Field step(const Field& x, const Field& dw, int step_index = -1);

    Trajectory simulate(const Field& x0, const NoisePath& path, SimulateOptions opts = {});

    /// Terminal state only; no trajectory storage.
    void run_terminal(std::span<const double> x0_modal, const NoisePath& path,
                      std::span<double> out_modal);

    /// Fine and coarse terminal states driven by the same Wiener path
    /// (coarse increments obtained by coarsen(fine, r)).
    std::pair<Field, Field> simulate_coupled(const Field& x0, const NoisePath& fine_path, int r);

    // Context accessors for the variations layer.
    std::span<const double> ctx_xs_nodal() const { return xs_nodal_; }
    std::span<const double> ctx_dws_nodal() const { return dws_nodal_; }

private:
    void smoothed_pair(std::span<const double> modal_in, std::vector<double>& modal_out,
                       std::vector<double>& nodal_out) const;
    void check_finite(std::span<const double> v) const;

    GridPtr grid_;
    SchemeParams params_;

    int step_index_ = -1;
    std::vector<double> x_modal_, xs_modal_, xs_nodal_;
    std::vector<double> dw_modal_, dws_modal_, dws_nodal_;
    std::vector<double> zs_modal_, zs_nodal_, prod_;
    std::vector<double> drift_, noise_nodal_, noise_modal_, sum_;
    std::vector<double> src_drift_, src_noise_;
    kernels::DriftScratch scratch_;
};

/// Monte Carlo mean of |(-A)^alpha X_N|_{L2}^2 with standard error; stability
/// probe for the moment bound (alpha < 1/4).
struct McEstimate {
    double mean = 0.0;
    double stderr_of_mean = 0.0;
    long samples = 0;
    long failures = 0;
};

McEstimate moment_probe(const SchemeParams& params, const Field& x0, long samples, double alpha,
                        std::uint64_t seed);

}  // namespace spde
