#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spde/spectral.hpp"

namespace spde {

/// A scalar C^3_b function: value and derivatives up to order 3, with declared
/// sup-norm bounds B0..B3 (infinity allowed where a bound is not claimed,
/// e.g. polynomially growing test functions).
struct ScalarC3 {
    std::array<std::function<double(double)>, 4> deriv;
    std::array<double, 4> bound;

    double operator()(int order, double u) const { return deriv[static_cast<size_t>(order)](u); }
};

/// Smoothing parameters of the regularized scheme. delta smooths the
/// coefficients (G_delta, sigma_delta), tau smooths the noise term. Zero for
/// both recovers the production scheme.
struct RegularizationParams {
    double delta = 0.0;
    double tau = 0.0;
};

/// The four scalar families defining the SPDE: drift parts F1 (Nemytskii) and
/// F2 (under the Burgers derivative), diffusion sigma, and test function phi.
class CoefficientBundle {
public:
    CoefficientBundle(std::string name, ScalarC3 f1, ScalarC3 f2, ScalarC3 sigma, ScalarC3 phi);

    /// Named presets selectable from configuration:
    ///  - "smooth-default":   f1 = f2 = 0.5 sin, sigma = 0.5 + 0.25 cos, phi = cos
    ///  - "linear-additive":  f1 = f2 = 0, sigma = 0.5, phi(u) = u^2
    ///  - "decay":            f1 = f2 = sigma = 0, phi(u) = u^2
    static CoefficientBundle preset(std::string_view name);
    static std::vector<std::string> preset_names();

    const std::string& name() const { return name_; }
    const ScalarC3& f1() const { return f1_; }
    const ScalarC3& f2() const { return f2_; }
    const ScalarC3& sigma() const { return sigma_; }
    const ScalarC3& phi() const { return phi_; }

    /// True when f1 = f2 = 0 and sigma is constant; closed-form Gaussian
    /// oracles apply in that case.
    bool is_linear_additive() const { return linear_additive_; }
    /// Constant value of sigma when is_linear_additive().
    double constant_sigma() const { return constant_sigma_; }
    /// True when phi(u) = u^2 (enables the quadratic closed forms).
    bool phi_is_square() const { return phi_is_square_; }

    CoefficientBundle& set_linear_additive(double sigma_value);
    CoefficientBundle& set_phi_is_square();

private:
    std::string name_;
    ScalarC3 f1_, f2_, sigma_, phi_;
    bool linear_additive_ = false;
    double constant_sigma_ = 0.0;
    bool phi_is_square_ = false;
};

/// f^{(d)}(x(.)) * prod_j factors_j(.) pointwise on the collocation nodes.
Field nemytskii(const ScalarC3& fn, int order, const Field& x, std::span<const Field> factors);

/// Modal coefficients of the (delta-regularized) drift
///   G_delta(x) = e^{dA} F1(e^{dA}x) + B e^{dA} F2(e^{dA}x).
/// The Burgers part is realized through the integration-by-parts cosine
/// pairing with boundary values F2(0) (the state vanishes at the boundary).
Field drift_G(const CoefficientBundle& b, const Field& x, const RegularizationParams& reg);

/// First and second Frechet derivatives of G_delta. Direction products vanish
/// at the boundary, so the pairing carries no boundary contribution.
Field drift_G_d1(const CoefficientBundle& b, const Field& x, const Field& h,
                 const RegularizationParams& reg);
Field drift_G_d2(const CoefficientBundle& b, const Field& x, const Field& h, const Field& k,
                 const RegularizationParams& reg);

/// sigma_delta^{(d)}(x).(dirs...) applied to w, as a nodal product:
///   e^{dA} [ sigma^{(d)}(e^{dA}x) . (e^{dA}dirs...) (e^{dA}w) ].
Field diffusion_apply(const CoefficientBundle& b, int order, const Field& x,
                      std::span<const Field> dirs, const Field& w,
                      const RegularizationParams& reg);

/// phi(x) = Int phi~(x(xi)) dxi and its derivatives, by composite trapezoid
/// quadrature with x(0) = x(1) = 0. Directions vanish at the boundary, so
/// orders >= 1 reduce to the interior sum.
double test_functional(const CoefficientBundle& b, int order, const Field& x,
                       std::span<const Field> dirs);

namespace kernels {

// Span-level pieces shared by the Field wrappers above and the solver loops.
// All inputs are already smoothed where the regularization requires it.

struct DriftScratch {
    std::vector<double> values;         // M
    std::vector<double> with_boundary;  // M+2
    std::vector<double> modal;          // M
    void ensure(int modes);
};

/// out_modal += modal of e^{dA}[F1^{(d)}(xs) . prod] + B e^{dA}[F2^{(d)}(xs) . prod].
/// `prod_nodal` is the pointwise product of the (smoothed) directions; empty
/// for order 0. `boundary0` supplies the boundary value of the F2 integrand
/// (F2(0) at order 0, zero at higher orders).
void accumulate_drift_modal(const SpectralGrid& g, const CoefficientBundle& b, int order,
                            std::span<const double> xs_nodal, std::span<const double> prod_nodal,
                            double delta, std::span<double> out_modal, DriftScratch& scratch);

/// out_nodal = sigma^{(d)}(xs) . prod . w pointwise (no smoothing applied here).
void diffusion_nodal(const CoefficientBundle& b, int order, std::span<const double> xs_nodal,
                     std::span<const double> prod_nodal, std::span<const double> w_nodal,
                     std::span<double> out_nodal);

/// Trapezoid quadrature of phi^{(d)}(x) . prod, boundary handled per above.
double functional_quadrature(const SpectralGrid& g, const ScalarC3& phi, int order,
                             std::span<const double> x_nodal, std::span<const double> prod_nodal);

}  // namespace kernels

}  // namespace spde
