#include "mvstop/fokker_planck.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <stdexcept>
#include <string>

#include "mvstop/error.hpp"

namespace mvstop {

namespace {

double edge_mass(const GridDensity& d, std::size_t band) {
    const std::size_t n = d.values.size();
    band = std::min(band, n / 2);
    double s = 0.0;
    for (std::size_t i = 0; i < band; ++i) s += std::fabs(d.values[i]) + std::fabs(d.values[n - 1 - i]);
    return s * d.grid.dx();
}

void check_support(const GridDensity& d, const SpideOptions& options) {
    const double edge = edge_mass(d, options.edge_cells);
    if (edge > options.boundary_tol) {
        throw NumericalAbort("density mass " + std::to_string(edge) + " reached the grid boundary at t=" +
                                 std::to_string(d.time),
                             d.time);
    }
}

inline double at(const std::vector<double>& v, std::ptrdiff_t i) {
    return (i < 0 || i >= static_cast<std::ptrdiff_t>(v.size())) ? 0.0 : v[static_cast<std::size_t>(i)];
}

// Linear interpolation of rho at x, zero off the grid.
double interpolate(const GridDensity& d, double x) {
    const double pos = (x - d.grid.x_min) / d.grid.dx();
    const double fl = std::floor(pos);
    const auto i = static_cast<std::ptrdiff_t>(fl);
    const double w = pos - fl;
    return (1.0 - w) * at(d.values, i) + w * at(d.values, i + 1);
}

template <class Body>
void for_nodes(std::size_t count, Exec exec, Body&& body) {
    const auto n = static_cast<std::ptrdiff_t>(count);
    const bool parallel = exec == Exec::parallel && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) body(i);
}

// Jump part of A0*: intensity * E_zeta[ rho^(gamma) - rho + gamma D rho ].
// gamma does not depend on x in the shipped families; the shifted density is
// rescaled to the mass of rho.
void add_jump_term(const GridDensity& d, const ModelSpec& spec, double m, std::vector<double>& out) {
    const auto& levy = spec.levy();
    if (levy.intensity <= 0.0) return;
    const double dx = d.grid.dx();
    const double scale = spec.jump_scale(d.time, 0.0, m);
    const double base_mass = mass(d);
    const std::size_t n = d.values.size();
    std::vector<double> shifted(n);
    std::vector<double> acc(n, 0.0);
    auto accumulate = [&](double zeta, double weight) {
        const double gamma = scale * zeta;
        for (std::size_t i = 0; i < n; ++i) shifted[i] = interpolate(d, d.grid.node(i) - gamma);
        const double shifted_mass = trapezoid(d.grid, shifted);
        const double renorm = shifted_mass > 0.0 ? base_mass / shifted_mass : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<std::ptrdiff_t>(i);
            const double drho = (at(d.values, k + 1) - at(d.values, k - 1)) / (2.0 * dx);
            acc[i] += weight * (renorm * shifted[i] - d.values[i] + gamma * drho);
        }
    };
    for (const auto& [zeta, weight] : levy.marks.quadrature()) accumulate(zeta, weight);
    for (std::size_t i = 0; i < n; ++i) out[i] += levy.intensity * acc[i];
}

}  // namespace

std::vector<double> apply_A0_star(const GridDensity& d, const ModelSpec& spec, const SpideOptions& options) {
    d.grid.validate();
    check_support(d, options);
    const double m = first_moment(d);
    const double t = d.time;
    const double dx = d.grid.dx();
    const std::size_t n = d.values.size();

    std::vector<double> flux(n);  // alpha * rho
    std::vector<double> diff(n);  // (beta1^2 + beta2^2) * rho
    for (std::size_t i = 0; i < n; ++i) {
        const double x = d.grid.node(i);
        const double b1 = spec.diffusion_common(t, x, m);
        const double b2 = spec.diffusion_idio(t, x, m);
        flux[i] = spec.drift(t, x, m) * d.values[i];
        diff[i] = (b1 * b1 + b2 * b2) * d.values[i];
    }
    std::vector<double> out(n);
    for_nodes(n, options.exec, [&](std::ptrdiff_t i) {
        const double adv = -(at(flux, i + 1) - at(flux, i - 1)) / (2.0 * dx);
        const double dif = 0.5 * (at(diff, i + 1) - 2.0 * at(diff, i) + at(diff, i - 1)) / (dx * dx);
        out[static_cast<std::size_t>(i)] = adv + dif;
    });
    add_jump_term(d, spec, m, out);
    return out;
}

std::vector<double> apply_A1_star(const GridDensity& d, const ModelSpec& spec, const SpideOptions& options) {
    d.grid.validate();
    check_support(d, options);
    const double m = first_moment(d);
    const double dx = d.grid.dx();
    const std::size_t n = d.values.size();
    std::vector<double> flux(n);
    for (std::size_t i = 0; i < n; ++i) flux[i] = spec.diffusion_common(d.time, d.grid.node(i), m) * d.values[i];
    std::vector<double> out(n);
    for_nodes(n, options.exec, [&](std::ptrdiff_t i) {
        out[static_cast<std::size_t>(i)] = -(at(flux, i + 1) - at(flux, i - 1)) / (2.0 * dx);
    });
    return out;
}

double max_stable_dt(const GridDensity& d, const ModelSpec& spec, const SpideOptions& options) {
    const double m = first_moment(d);
    double peak = 0.0;
    for (std::size_t i = 0; i < d.values.size(); ++i) {
        const double x = d.grid.node(i);
        const double b1 = spec.diffusion_common(d.time, x, m);
        const double b2 = spec.diffusion_idio(d.time, x, m);
        peak = std::max(peak, b1 * b1 + b2 * b2);
    }
    const double dx = d.grid.dx();
    return peak > 0.0 ? options.cfl * dx * dx / peak : std::numeric_limits<double>::infinity();
}

SpideStepReport step_spide(GridDensity& d, const ModelSpec& spec, double dt, double dB1,
                           const SpideOptions& options) {
    if (!(dt > 0.0)) throw std::invalid_argument("SPIDE step needs dt > 0");
    const double limit = max_stable_dt(d, spec, options);
    if (dt > limit) {
        throw std::invalid_argument("SPIDE dt=" + std::to_string(dt) + " exceeds CFL bound " + std::to_string(limit));
    }
    const double before = mass(d);
    const auto a0 = apply_A0_star(d, spec, options);
    const auto a1 = apply_A1_star(d, spec, options);

    SpideStepReport report;
    const std::size_t n = d.values.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double v = d.values[i] + a0[i] * dt + a1[i] * dB1;
        if (!std::isfinite(v) || std::fabs(v) > options.blowup_cap) {
            throw NumericalAbort("SPIDE blow-up at t=" + std::to_string(d.time + dt) +
                                     "; reduce dt below the CFL bound " + std::to_string(limit),
                                 d.time + dt, static_cast<std::ptrdiff_t>(i));
        }
        d.values[i] = v;
    }
    const double after = mass(d);
    report.mass_defect = std::fabs(after - before);

    std::vector<double> negative(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (d.values[i] < 0.0) {
            negative[i] = -d.values[i];
            d.values[i] = 0.0;
        }
    }
    report.clipped_mass = trapezoid(d.grid, negative);
    const double m = mass(d);
    if (!(m > 0.0)) throw NumericalAbort("SPIDE density lost all mass", d.time + dt);
    for (double& v : d.values) v /= m;
    d.time += dt;
    return report;
}

double compare_to_particles(const GridDensity& density, const GridDensity& kde) {
    if (!(density.grid == kde.grid) || density.values.size() != kde.values.size()) {
        throw std::invalid_argument("densities live on different grids");
    }
    std::vector<double> diff(density.values.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = std::fabs(density.values[i] - kde.values[i]);
    return trapezoid(density.grid, diff);
}

void write_density_csv(std::ostream& out, const GridDensity& density) {
    out << "x,value\n" << std::setprecision(17);
    for (std::size_t i = 0; i < density.values.size(); ++i) {
        out << density.grid.node(i) << ',' << density.values[i] << '\n';
    }
}

}  // namespace mvstop
