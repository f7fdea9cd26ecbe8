#include "spde/spectral.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace spde {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;

void check_size(size_t got, size_t want, const char* what) {
    if (got != want) {
        throw std::invalid_argument(std::string(what) + ": size mismatch");
    }
}
}  // namespace

SpectralGrid::SpectralGrid(int modes) : modes_(modes) {
    if (modes < 1) {
        throw std::invalid_argument("SpectralGrid: modes must be >= 1");
    }
    const size_t m = static_cast<size_t>(modes);
    nodes_.resize(m);
    eigenvalues_.resize(m);
    sine_.resize(m * m);
    cosine_.resize(m * m);
    const double h = 1.0 / (modes + 1);
    for (size_t k = 0; k < m; ++k) {
        nodes_[k] = static_cast<double>(k + 1) * h;
    }
    for (size_t i = 0; i < m; ++i) {
        const double ip = static_cast<double>(i + 1) * kPi;
        eigenvalues_[i] = ip * ip;
        for (size_t k = 0; k < m; ++k) {
            const double arg = ip * nodes_[k];
            sine_[i * m + k] = kSqrt2 * std::sin(arg);
            cosine_[i * m + k] = std::cos(arg);
        }
    }
}

void SpectralGrid::to_modal(std::span<const double> nodal, std::span<double> modal) const {
    const size_t m = static_cast<size_t>(modes_);
    check_size(nodal.size(), m, "to_modal");
    check_size(modal.size(), m, "to_modal");
    const double w = quad_weight();
    for (size_t i = 0; i < m; ++i) {
        const double* row = &sine_[i * m];
        double acc = 0.0;
        for (size_t k = 0; k < m; ++k) acc += row[k] * nodal[k];
        modal[i] = w * acc;
    }
}

void SpectralGrid::from_modal(std::span<const double> modal, std::span<double> nodal) const {
    const size_t m = static_cast<size_t>(modes_);
    check_size(modal.size(), m, "from_modal");
    check_size(nodal.size(), m, "from_modal");
    for (size_t k = 0; k < m; ++k) nodal[k] = 0.0;
    // The sine table is symmetric in (i,k); iterate rows for contiguity.
    for (size_t i = 0; i < m; ++i) {
        const double a = modal[i];
        if (a == 0.0) continue;
        const double* row = &sine_[i * m];
        for (size_t k = 0; k < m; ++k) nodal[k] += a * row[k];
    }
}

void SpectralGrid::derivative_sine_coeffs(std::span<const double> nodal_with_boundary,
                                          std::span<double> modal) const {
    derivative_sine_coeffs_smoothed(nodal_with_boundary, 0.0, modal);
}

void SpectralGrid::derivative_sine_coeffs_smoothed(std::span<const double> nodal_with_boundary,
                                                   double delta, std::span<double> modal) const {
    const size_t m = static_cast<size_t>(modes_);
    if (nodal_with_boundary.size() != m + 2) {
        throw std::invalid_argument("derivative_sine_coeffs: expected M+2 values");
    }
    check_size(modal.size(), m, "derivative_sine_coeffs");
    const double w = quad_weight();
    const double f0 = 0.5 * nodal_with_boundary[0];
    const double f1 = 0.5 * nodal_with_boundary[m + 1];
    for (size_t i = 0; i < m; ++i) {
        const double* row = &cosine_[i * m];
        // Trapezoid quadrature of f(xi) cos((i+1) pi xi); cos = 1 at xi=0 and
        // (-1)^{i+1} at xi=1.
        double acc = f0 + ((i % 2 == 0) ? -f1 : f1);
        for (size_t k = 0; k < m; ++k) acc += row[k] * nodal_with_boundary[k + 1];
        double coeff = -kSqrt2 * static_cast<double>(i + 1) * kPi * w * acc;
        if (delta > 0.0) coeff *= std::exp(-delta * eigenvalues_[i]);
        modal[i] = coeff;
    }
}

GridPtr build_grid(int modes) { return std::make_shared<const SpectralGrid>(modes); }

Field Field::zero(GridPtr grid) {
    Field f(std::move(grid), Rep::modal);
    const size_t m = static_cast<size_t>(f.grid_->modes());
    f.nodal_.assign(m, 0.0);
    f.modal_.assign(m, 0.0);
    return f;
}

Field Field::from_nodal(GridPtr grid, std::vector<double> nodal) {
    Field f(std::move(grid), Rep::nodal);
    const size_t m = static_cast<size_t>(f.grid_->modes());
    check_size(nodal.size(), m, "Field::from_nodal");
    f.nodal_ = std::move(nodal);
    f.modal_.resize(m);
    f.grid_->to_modal(f.nodal_, f.modal_);
    return f;
}

Field Field::from_modal(GridPtr grid, std::vector<double> modal) {
    Field f(std::move(grid), Rep::modal);
    const size_t m = static_cast<size_t>(f.grid_->modes());
    check_size(modal.size(), m, "Field::from_modal");
    f.modal_ = std::move(modal);
    f.nodal_.resize(m);
    f.grid_->from_modal(f.modal_, f.nodal_);
    return f;
}

Field Field::basis(GridPtr grid, int mode, double amplitude) {
    const int m = grid->modes();
    if (mode < 1 || mode > m) {
        throw std::invalid_argument("Field::basis: mode out of range");
    }
    std::vector<double> modal(static_cast<size_t>(m), 0.0);
    modal[static_cast<size_t>(mode - 1)] = amplitude;
    return from_modal(std::move(grid), std::move(modal));
}

double Field::l2_norm() const {
    double s = 0.0;
    for (double a : modal_) s += a * a;
    return std::sqrt(s);
}

double Field::dot(const Field& other) const {
    if (grid_.get() != other.grid_.get() && grid_->modes() != other.grid_->modes()) {
        throw std::invalid_argument("Field::dot: grid mismatch");
    }
    double s = 0.0;
    for (size_t i = 0; i < modal_.size(); ++i) s += modal_[i] * other.modal_[i];
    return s;
}

Field to_modal(const Field& f) {
    return Field::from_modal(f.grid_ptr(), std::vector<double>(f.modal().begin(), f.modal().end()));
}

Field from_modal(const Field& f) {
    return Field::from_nodal(f.grid_ptr(), std::vector<double>(f.nodal().begin(), f.nodal().end()));
}

Field apply_semigroup(double t, const Field& f) {
    if (t < 0.0) throw std::invalid_argument("apply_semigroup: t must be >= 0");
    std::vector<double> modal(f.modal().begin(), f.modal().end());
    diag::semigroup(f.grid(), t, modal);
    return Field::from_modal(f.grid_ptr(), std::move(modal));
}

Field apply_resolvent_power(int n, double dt, const Field& f) {
    if (n < 0) throw std::invalid_argument("apply_resolvent_power: n must be >= 0");
    if (dt <= 0.0) throw std::invalid_argument("apply_resolvent_power: dt must be > 0");
    std::vector<double> modal(f.modal().begin(), f.modal().end());
    const auto lam = f.grid().eigenvalues();
    // Iterated division so that power n equals n single applications bitwise.
    for (size_t i = 0; i < modal.size(); ++i) {
        const double d = 1.0 + dt * lam[i];
        for (int j = 0; j < n; ++j) modal[i] /= d;
    }
    return Field::from_modal(f.grid_ptr(), std::move(modal));
}

Field apply_frac_power(double alpha, const Field& f) {
    std::vector<double> modal(f.modal().begin(), f.modal().end());
    if (alpha != 0.0) {
        const auto lam = f.grid().eigenvalues();
        for (size_t i = 0; i < modal.size(); ++i) modal[i] *= std::pow(lam[i], alpha);
    }
    return Field::from_modal(f.grid_ptr(), std::move(modal));
}

std::vector<double> derivative_sine_coeffs(const SpectralGrid& grid,
                                           std::span<const double> nodal_with_boundary) {
    std::vector<double> modal(static_cast<size_t>(grid.modes()));
    grid.derivative_sine_coeffs(nodal_with_boundary, modal);
    return modal;
}

double hs_norm_frac_resolvent(double beta, int n, double dt, int modes) {
    double s = 0.0;
    for (int i = 1; i <= modes; ++i) {
        const double lam = (i * kPi) * (i * kPi);
        const double r = 1.0 / (1.0 + dt * lam);
        s += std::pow(lam, 2.0 * beta) * std::pow(r, 2 * n);
    }
    return std::sqrt(s);
}

namespace diag {

void semigroup(const SpectralGrid& g, double t, std::span<double> modal) {
    if (t == 0.0) return;
    const auto lam = g.eigenvalues();
    for (size_t i = 0; i < modal.size(); ++i) modal[i] *= std::exp(-t * lam[i]);
}

void resolvent(const SpectralGrid& g, double dt, std::span<double> modal) {
    const auto lam = g.eigenvalues();
    for (size_t i = 0; i < modal.size(); ++i) modal[i] /= 1.0 + dt * lam[i];
}

}  // namespace diag

}  // namespace spde
