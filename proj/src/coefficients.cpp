#include "spde/coefficients.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace spde {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same_grid(const Field& a, const Field& b, const char* what) {
    if (a.grid().modes() != b.grid().modes()) {
        throw std::invalid_argument(std::string(what) + ": grid mismatch");
    }
}

std::vector<double> smoothed_nodal(const Field& f, double delta) {
    if (delta == 0.0) return {f.nodal().begin(), f.nodal().end()};
    std::vector<double> modal(f.modal().begin(), f.modal().end());
    diag::semigroup(f.grid(), delta, modal);
    std::vector<double> nodal(modal.size());
    f.grid().from_modal(modal, nodal);
    return nodal;
}

std::vector<double> direction_product(const Field& x, std::span<const Field> dirs, double delta) {
    std::vector<double> prod;
    for (const auto& d : dirs) {
        check_same_grid(x, d, "direction");
        auto dn = smoothed_nodal(d, delta);
        if (prod.empty()) {
            prod = std::move(dn);
        } else {
            for (size_t k = 0; k < prod.size(); ++k) prod[k] *= dn[k];
        }
    }
    return prod;
}
}  // namespace

CoefficientBundle::CoefficientBundle(std::string name, ScalarC3 f1, ScalarC3 f2, ScalarC3 sigma,
                                     ScalarC3 phi)
    : name_(std::move(name)),
      f1_(std::move(f1)),
      f2_(std::move(f2)),
      sigma_(std::move(sigma)),
      phi_(std::move(phi)) {}

CoefficientBundle& CoefficientBundle::set_linear_additive(double sigma_value) {
    linear_additive_ = true;
    constant_sigma_ = sigma_value;
    return *this;
}

CoefficientBundle& CoefficientBundle::set_phi_is_square() {
    phi_is_square_ = true;
    return *this;
}

namespace {

ScalarC3 zero_fn() {
    auto z = [](double) { return 0.0; };
    return {{z, z, z, z}, {0.0, 0.0, 0.0, 0.0}};
}

ScalarC3 const_fn(double c) {
    auto z = [](double) { return 0.0; };
    return {{[c](double) { return c; }, z, z, z}, {std::abs(c), 0.0, 0.0, 0.0}};
}

ScalarC3 scaled_sin(double a) {
    return {{[a](double u) { return a * std::sin(u); }, [a](double u) { return a * std::cos(u); },
             [a](double u) { return -a * std::sin(u); }, [a](double u) { return -a * std::cos(u); }},
            {std::abs(a), std::abs(a), std::abs(a), std::abs(a)}};
}

ScalarC3 cos_fn() {
    return {{[](double u) { return std::cos(u); }, [](double u) { return -std::sin(u); },
             [](double u) { return -std::cos(u); }, [](double u) { return std::sin(u); }},
            {1.0, 1.0, 1.0, 1.0}};
}

ScalarC3 shifted_cos(double c0, double a) {
    return {{[c0, a](double u) { return c0 + a * std::cos(u); },
             [a](double u) { return -a * std::sin(u); }, [a](double u) { return -a * std::cos(u); },
             [a](double u) { return a * std::sin(u); }},
            {std::abs(c0) + std::abs(a), std::abs(a), std::abs(a), std::abs(a)}};
}

ScalarC3 square_fn() {
    return {{[](double u) { return u * u; }, [](double u) { return 2.0 * u; },
             [](double) { return 2.0; }, [](double) { return 0.0; }},
            {kInf, kInf, 2.0, 0.0}};
}

}  // namespace

CoefficientBundle CoefficientBundle::preset(std::string_view name) {
    if (name == "smooth-default") {
        return CoefficientBundle("smooth-default", scaled_sin(0.5), scaled_sin(0.5),
                                 shifted_cos(0.5, 0.25), cos_fn());
    }
    if (name == "linear-additive") {
        CoefficientBundle b("linear-additive", zero_fn(), zero_fn(), const_fn(0.5), square_fn());
        b.set_linear_additive(0.5).set_phi_is_square();
        return b;
    }
    if (name == "decay") {
        CoefficientBundle b("decay", zero_fn(), zero_fn(), const_fn(0.0), square_fn());
        b.set_linear_additive(0.0).set_phi_is_square();
        return b;
    }
    throw std::invalid_argument("unknown coefficient bundle: " + std::string(name));
}

std::vector<std::string> CoefficientBundle::preset_names() {
    return {"smooth-default", "linear-additive", "decay"};
}

Field nemytskii(const ScalarC3& fn, int order, const Field& x, std::span<const Field> factors) {
    if (order < 0 || order > 3) throw std::invalid_argument("nemytskii: order in {0,1,2,3}");
    if (factors.size() != static_cast<size_t>(order)) {
        throw std::invalid_argument("nemytskii: factors length must equal order");
    }
    const auto xn = x.nodal();
    std::vector<double> out(xn.size());
    for (size_t k = 0; k < out.size(); ++k) out[k] = fn(order, xn[k]);
    for (const auto& f : factors) {
        check_same_grid(x, f, "nemytskii");
        const auto fn_nodal = f.nodal();
        for (size_t k = 0; k < out.size(); ++k) out[k] *= fn_nodal[k];
    }
    return Field::from_nodal(x.grid_ptr(), std::move(out));
}

namespace kernels {

void DriftScratch::ensure(int modes) {
    const size_t m = static_cast<size_t>(modes);
    if (values.size() != m) {
        values.resize(m);
        with_boundary.resize(m + 2);
        modal.resize(m);
    }
}

void accumulate_drift_modal(const SpectralGrid& g, const CoefficientBundle& b, int order,
                            std::span<const double> xs_nodal, std::span<const double> prod_nodal,
                            double delta, std::span<double> out_modal, DriftScratch& scratch) {
    const size_t m = static_cast<size_t>(g.modes());
    scratch.ensure(g.modes());

    // Nemytskii part F1^{(d)}(xs) . prod -> modal, damped by e^{-delta lambda}.
    const ScalarC3& f1 = b.f1();
    for (size_t k = 0; k < m; ++k) {
        double v = f1(order, xs_nodal[k]);
        if (!prod_nodal.empty()) v *= prod_nodal[k];
        scratch.values[k] = v;
    }
    g.to_modal(scratch.values, scratch.modal);
    if (delta > 0.0) diag::semigroup(g, delta, scratch.modal);
    for (size_t i = 0; i < m; ++i) out_modal[i] += scratch.modal[i];

    // Burgers part: pairing of F2^{(d)}(xs) . prod. At order 0 the boundary
    // value is F2(0); directions vanish at the boundary for higher orders.
    const ScalarC3& f2 = b.f2();
    const double boundary = (order == 0) ? f2(0, 0.0) : 0.0;
    scratch.with_boundary[0] = boundary;
    scratch.with_boundary[m + 1] = boundary;
    for (size_t k = 0; k < m; ++k) {
        double v = f2(order, xs_nodal[k]);
        if (!prod_nodal.empty()) v *= prod_nodal[k];
        scratch.with_boundary[k + 1] = v;
    }
    g.derivative_sine_coeffs_smoothed(scratch.with_boundary, delta, scratch.modal);
    for (size_t i = 0; i < m; ++i) out_modal[i] += scratch.modal[i];
}

void diffusion_nodal(const CoefficientBundle& b, int order, std::span<const double> xs_nodal,
                     std::span<const double> prod_nodal, std::span<const double> w_nodal,
                     std::span<double> out_nodal) {
    const ScalarC3& s = b.sigma();
    for (size_t k = 0; k < out_nodal.size(); ++k) {
        double v = s(order, xs_nodal[k]) * w_nodal[k];
        if (!prod_nodal.empty()) v *= prod_nodal[k];
        out_nodal[k] = v;
    }
}

double functional_quadrature(const SpectralGrid& g, const ScalarC3& phi, int order,
                             std::span<const double> x_nodal, std::span<const double> prod_nodal) {
    const size_t m = static_cast<size_t>(g.modes());
    double acc = 0.0;
    for (size_t k = 0; k < m; ++k) {
        double v = phi(order, x_nodal[k]);
        if (!prod_nodal.empty()) v *= prod_nodal[k];
        acc += v;
    }
    if (order == 0) {
        // Boundary trapezoid terms with x(0) = x(1) = 0; for order >= 1 the
        // direction product vanishes there.
        acc += phi(0, 0.0);
    }
    return acc * g.quad_weight();
}

}  // namespace kernels

Field drift_G(const CoefficientBundle& b, const Field& x, const RegularizationParams& reg) {
    const auto& g = x.grid();
    auto xs = smoothed_nodal(x, reg.delta);
    std::vector<double> out(static_cast<size_t>(g.modes()), 0.0);
    kernels::DriftScratch scratch;
    kernels::accumulate_drift_modal(g, b, 0, xs, {}, reg.delta, out, scratch);
    return Field::from_modal(x.grid_ptr(), std::move(out));
}

Field drift_G_d1(const CoefficientBundle& b, const Field& x, const Field& h,
                 const RegularizationParams& reg) {
    check_same_grid(x, h, "drift_G_d1");
    const auto& g = x.grid();
    auto xs = smoothed_nodal(x, reg.delta);
    const Field dirs[] = {h};
    auto prod = direction_product(x, dirs, reg.delta);
    std::vector<double> out(static_cast<size_t>(g.modes()), 0.0);
    kernels::DriftScratch scratch;
    kernels::accumulate_drift_modal(g, b, 1, xs, prod, reg.delta, out, scratch);
    return Field::from_modal(x.grid_ptr(), std::move(out));
}

Field drift_G_d2(const CoefficientBundle& b, const Field& x, const Field& h, const Field& k,
                 const RegularizationParams& reg) {
    check_same_grid(x, h, "drift_G_d2");
    check_same_grid(x, k, "drift_G_d2");
    const auto& g = x.grid();
    auto xs = smoothed_nodal(x, reg.delta);
    const Field dirs[] = {h, k};
    auto prod = direction_product(x, dirs, reg.delta);
    std::vector<double> out(static_cast<size_t>(g.modes()), 0.0);
    kernels::DriftScratch scratch;
    kernels::accumulate_drift_modal(g, b, 2, xs, prod, reg.delta, out, scratch);
    return Field::from_modal(x.grid_ptr(), std::move(out));
}

Field diffusion_apply(const CoefficientBundle& b, int order, const Field& x,
                      std::span<const Field> dirs, const Field& w,
                      const RegularizationParams& reg) {
    if (order < 0 || order > 2) throw std::invalid_argument("diffusion_apply: order in {0,1,2}");
    if (dirs.size() != static_cast<size_t>(order)) {
        throw std::invalid_argument("diffusion_apply: dirs length must equal order");
    }
    check_same_grid(x, w, "diffusion_apply");
    const auto& g = x.grid();
    auto xs = smoothed_nodal(x, reg.delta);
    auto prod = direction_product(x, dirs, reg.delta);
    auto ws = smoothed_nodal(w, reg.delta);
    std::vector<double> out(static_cast<size_t>(g.modes()));
    kernels::diffusion_nodal(b, order, xs, prod, ws, out);
    if (reg.delta > 0.0) {
        std::vector<double> modal(out.size());
        g.to_modal(out, modal);
        diag::semigroup(g, reg.delta, modal);
        return Field::from_modal(x.grid_ptr(), std::move(modal));
    }
    return Field::from_nodal(x.grid_ptr(), std::move(out));
}

double test_functional(const CoefficientBundle& b, int order, const Field& x,
                       std::span<const Field> dirs) {
    if (order < 0 || order > 2) throw std::invalid_argument("test_functional: order in {0,1,2}");
    if (dirs.size() != static_cast<size_t>(order)) {
        throw std::invalid_argument("test_functional: dirs length must equal order");
    }
    std::vector<double> prod;
    for (const auto& d : dirs) {
        check_same_grid(x, d, "test_functional");
        const auto dn = d.nodal();
        if (prod.empty()) {
            prod.assign(dn.begin(), dn.end());
        } else {
            for (size_t k = 0; k < prod.size(); ++k) prod[k] *= dn[k];
        }
    }
    return kernels::functional_quadrature(x.grid(), b.phi(), order, x.nodal(), prod);
}

}  // namespace spde
