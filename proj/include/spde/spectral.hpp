#pragma once

#include <memory>
#include <span>
#include <vector>

namespace spde {

/// Sine eigenbasis of the Dirichlet Laplacian on (0,1), truncated at M modes.
///
/// Nodes are the interior collocation points xi_k = k/(M+1), k = 1..M, and the
/// eigenpairs are the exact continuous ones: e_i = sqrt(2) sin(i pi xi) with
/// eigenvalue lambda_i = (i pi)^2. The discrete sine vectors are orthonormal
/// under the quadrature weight 1/(M+1), which makes nodal<->modal a DST-I pair
/// and the quadrature L2 norm equal to the modal l2 norm.
class SpectralGrid {
public:
    explicit SpectralGrid(int modes);

    int modes() const { return modes_; }
    std::span<const double> nodes() const { return nodes_; }
    std::span<const double> eigenvalues() const { return eigenvalues_; }
    double eigenvalue(int i) const { return eigenvalues_[static_cast<size_t>(i)]; }
    double quad_weight() const { return 1.0 / (modes_ + 1); }

    /// modal_i = <v, e_i> by the exact discrete quadrature.
    void to_modal(std::span<const double> nodal, std::span<double> modal) const;
    /// nodal_k = sum_i modal_i e_i(xi_k).
    void from_modal(std::span<const double> modal, std::span<double> nodal) const;

    /// Sine coefficients of d_xi f from nodal values of f INCLUDING both
    /// boundary values (length M+2, positions xi_k = k/(M+1), k = 0..M+1).
    /// Composite-trapezoid realization of the integration-by-parts pairing
    /// <d_xi f, e_i> = -sqrt(2) i pi  Int f(xi) cos(i pi xi) dxi,
    /// with no boundary terms since e_i vanishes at 0 and 1.
    void derivative_sine_coeffs(std::span<const double> nodal_with_boundary,
                                std::span<double> modal) const;

    /// Same pairing, with each resulting sine coefficient additionally damped
    /// by exp(-delta * lambda_i). Equivalent to smoothing the integrand with
    /// the cosine-basis heat flow before pairing, since the pairing extracts
    /// exactly the i-th cosine coefficient.
    void derivative_sine_coeffs_smoothed(std::span<const double> nodal_with_boundary,
                                         double delta, std::span<double> modal) const;

private:
    int modes_;
    std::vector<double> nodes_;
    std::vector<double> eigenvalues_;
    std::vector<double> sine_;    // sine_[i*M+k] = sqrt(2) sin((i+1) pi (k+1)/(M+1))
    std::vector<double> cosine_;  // cosine_[i*M+k] = cos((i+1) pi (k+1)/(M+1))
};

using GridPtr = std::shared_ptr<const SpectralGrid>;

GridPtr build_grid(int modes);

/// SPDE state on (0,1): nodal values at the interior collocation points and
/// sine-mode coefficients, kept consistent. Value-semantic and immutable
/// through the public operations, so Fields can move freely between threads.
class Field {
public:
    enum class Rep { nodal, modal };

    static Field zero(GridPtr grid);
    static Field from_nodal(GridPtr grid, std::vector<double> nodal);
    static Field from_modal(GridPtr grid, std::vector<double> modal);
    /// Convenience: amplitude * e_mode (mode is 1-based).
    static Field basis(GridPtr grid, int mode, double amplitude = 1.0);

    const SpectralGrid& grid() const { return *grid_; }
    GridPtr grid_ptr() const { return grid_; }
    int modes() const { return grid_->modes(); }
    Rep source_rep() const { return source_; }

    std::span<const double> nodal() const { return nodal_; }
    std::span<const double> modal() const { return modal_; }

    /// Quadrature L2 norm; equals the modal l2 norm by discrete Parseval.
    double l2_norm() const;
    /// Quadrature inner product <f, g>.
    double dot(const Field& other) const;

private:
    Field(GridPtr grid, Rep source) : grid_(std::move(grid)), source_(source) {}

    GridPtr grid_;
    Rep source_;
    std::vector<double> nodal_;
    std::vector<double> modal_;
};

/// Representation-flip operations; both representations are always kept
/// consistent, so these only re-tag the source and are involutive.
Field to_modal(const Field& f);
Field from_modal(const Field& f);

/// e^{tA}: modal coefficients scaled by exp(-lambda_i t). Requires t >= 0.
Field apply_semigroup(double t, const Field& f);

/// S_dt^n with S_dt = (I - dt A)^{-1}: modal scaling by (1 + dt lambda_i)^{-n}.
/// n = 0 is the identity. Requires dt > 0.
Field apply_resolvent_power(int n, double dt, const Field& f);

/// (-A)^alpha: modal scaling by lambda_i^alpha; total on the truncated space.
Field apply_frac_power(double alpha, const Field& f);

/// Free function form of the cosine-pairing derivative (spec surface).
std::vector<double> derivative_sine_coeffs(const SpectralGrid& grid,
                                           std::span<const double> nodal_with_boundary);

/// Hilbert-Schmidt norm of (-A)^beta S_dt^n on the truncated space:
/// ( sum_{i<=M} lambda_i^{2 beta} (1 + dt lambda_i)^{-2n} )^{1/2}.
double hs_norm_frac_resolvent(double beta, int n, double dt, int modes);

namespace diag {
// In-place modal scalings used by the hot loops.
void semigroup(const SpectralGrid& g, double t, std::span<double> modal);
void resolvent(const SpectralGrid& g, double dt, std::span<double> modal);
}  // namespace diag

}  // namespace spde
