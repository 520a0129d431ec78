#include "mvstop/generator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace mvstop {

CylinderFunction CylinderFunction::discounted(double rho, ScalarFn F, ScalarFn dF, ScalarFn d2F) {
    CylinderFunction phi;
    phi.psi = [rho](double s) { return std::exp(-rho * s); };
    phi.dpsi = [rho](double s) { return -rho * std::exp(-rho * s); };
    phi.F = std::move(F);
    phi.dF = std::move(dF);
    phi.d2F = std::move(d2F);
    return phi;
}

double derivative_mismatch(const CylinderFunction& phi, std::span<const double> zs, std::span<const double> ss) {
    auto rel = [](double numeric, double analytic) {
        return std::fabs(numeric - analytic) / std::max(1.0, std::fabs(analytic));
    };
    auto step_for = [](double x) { return 1e-5 * std::max(1.0, std::fabs(x)); };
    double worst = 0.0;
    for (double z : zs) {
        const double h = step_for(z);
        const double d1 = (phi.F(z + h) - phi.F(z - h)) / (2.0 * h);
        const double h2 = 1e-4 * std::max(1.0, std::fabs(z));
        const double d2 = (phi.dF(z + h2) - phi.dF(z - h2)) / (2.0 * h2);
        worst = std::max({worst, rel(d1, phi.dF(z)), rel(d2, phi.d2F(z))});
    }
    for (double s : ss) {
        const double h = step_for(s);
        worst = std::max(worst, rel((phi.psi(s + h) - phi.psi(s - h)) / (2.0 * h), phi.dpsi(s)));
    }
    return worst;
}

double frechet_gradient_cylinder(const ScalarFn& dF, double z, double h_pairing) { return dF(z) * h_pairing; }

double frechet_hessian_cylinder(const ScalarFn& d2F, double z, double h_pairing, double k_pairing) {
    return d2F(z) * h_pairing * k_pairing;
}

AdjointCoefficients adjoint_coefficients(const ModelSpec& spec, double z) {
    switch (spec.family()) {
        case ModelFamily::sell: return {spec.alpha0() * z, spec.sigma1() * z};
        case ModelFamily::quit: return {0.0, spec.sigma1()};
    }
    throw std::invalid_argument("generator: unsupported model family");
}

double apply_generator_cylinder(const CylinderFunction& phi, double s, double z, const ModelSpec& spec, double x) {
    const auto [a, b] = adjoint_coefficients(spec, z);
    const double psi = phi.psi(s);
    double measure_part = phi.F(z);
    double out = psi * (phi.dF(z) * a + 0.5 * phi.d2F(z) * b * b);
    if (phi.x_part) {
        const XPart& xp = *phi.x_part;
        measure_part += xp.h(x);
        const double t = s;
        const double b1 = spec.diffusion_common(t, x, z);
        const double b2 = spec.diffusion_idio(t, x, z);
        const double hx = xp.h(x);
        const double dhx = xp.dh(x);
        double local = spec.drift(t, x, z) * dhx + 0.5 * (b1 * b1 + b2 * b2) * xp.d2h(x);
        const auto& levy = spec.levy();
        if (levy.intensity > 0.0) {
            local += levy.intensity * levy.marks.expect([&](double zeta) {
                const double gamma = spec.jump_amp(t, x, z, zeta);
                return xp.h(x + gamma) - hx - gamma * dhx;
            });
        }
        out += psi * local;
    }
    return phi.dpsi(s) * measure_part + out;
}

std::vector<double> ProbeGrid::z_values() const {
    if (z_count == 0 || !(z_max >= z_min)) throw std::invalid_argument("probe grid: bad z range");
    if (log_spaced && !(z_min > 0.0)) throw std::invalid_argument("probe grid: log spacing needs z_min > 0");
    std::vector<double> zs(z_count);
    for (std::size_t i = 0; i < z_count; ++i) {
        const double u = z_count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(z_count - 1);
        zs[i] = log_spaced ? z_min * std::pow(z_max / z_min, u) : z_min + (z_max - z_min) * u;
    }
    return zs;
}

std::vector<double> ProbeGrid::s_values() const {
    if (s_count == 0 || !(s_max >= s_min)) throw std::invalid_argument("probe grid: bad s range");
    std::vector<double> ss(s_count);
    for (std::size_t i = 0; i < s_count; ++i) {
        const double u = s_count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(s_count - 1);
        ss[i] = s_min + (s_max - s_min) * u;
    }
    return ss;
}

bool VarIneqReport::flagged() const {
    return obstacle_violations > 0 || continuation.max_abs_residual > tol || stopping.max_residual > tol ||
           continuity_gap > fit_tol || smooth_fit_gap > fit_tol;
}

VarIneqReport check_variational_inequalities(const ValueCandidate& phi, const ScalarField& g, const ScalarField& f,
                                             const ModelSpec& spec, const ProbeGrid& probes,
                                             const VarIneqTolerances& tol) {
    VarIneqReport report;
    report.tol = tol.residual;
    report.fit_tol = tol.fit;
    report.min_obstacle_gap = std::numeric_limits<double>::infinity();
    report.continuation.min_residual = report.stopping.min_residual = std::numeric_limits<double>::infinity();
    report.continuation.max_residual = report.stopping.max_residual = -std::numeric_limits<double>::infinity();

    const auto zs = probes.z_values();
    const auto ss = probes.s_values();
    report.samples.reserve(zs.size() * ss.size());
    for (double s : ss) {
        for (double z : zs) {
            ProbeSample p;
            p.s = s;
            p.z = z;
            p.continuation = phi.in_continuation(z);
            p.phi = phi.value(s, z);
            p.obstacle = g(s, z);
            p.residual = phi.generator(s, z, spec) + f(s, z);
            RegionSummary& r = p.continuation ? report.continuation : report.stopping;
            ++r.probes;
            r.max_abs_residual = std::max(r.max_abs_residual, std::fabs(p.residual));
            r.min_residual = std::min(r.min_residual, p.residual);
            r.max_residual = std::max(r.max_residual, p.residual);
            const double gap = p.phi - p.obstacle;
            report.min_obstacle_gap = std::min(report.min_obstacle_gap, gap);
            if (gap < -tol.obstacle) ++report.obstacle_violations;
            report.samples.push_back(p);
        }
        const double zb = phi.boundary;
        report.continuity_gap =
            std::max(report.continuity_gap, std::fabs(phi.continuation.value(s, zb) - phi.stopping.value(s, zb)));
        report.smooth_fit_gap =
            std::max(report.smooth_fit_gap, std::fabs(phi.continuation.dz(s, zb) - phi.stopping.dz(s, zb)));
    }
    for (RegionSummary* r : {&report.continuation, &report.stopping}) {
        if (r->probes == 0) r->min_residual = r->max_residual = 0.0;
    }
    return report;
}

nlohmann::json to_json(const VarIneqReport& report) {
    auto region = [](const RegionSummary& r) {
        return nlohmann::json{{"probes", r.probes},
                              {"max_abs_residual", r.max_abs_residual},
                              {"min_residual", r.min_residual},
                              {"max_residual", r.max_residual}};
    };
    return {{"continuation", region(report.continuation)},
            {"stopping", region(report.stopping)},
            {"obstacle_violations", report.obstacle_violations},
            {"min_obstacle_gap", report.min_obstacle_gap},
            {"continuity_gap", report.continuity_gap},
            {"smooth_fit_gap", report.smooth_fit_gap},
            {"residual_tol", report.tol},
            {"fit_tol", report.fit_tol},
            {"sample_points", report.samples.size()},
            {"flagged", report.flagged()}};
}

void write_probe_csv(std::ostream& out, const VarIneqReport& report) {
    out << "s,z,region,phi,obstacle,residual\n" << std::setprecision(17);
    for (const auto& p : report.samples) {
        out << p.s << ',' << p.z << ',' << (p.continuation ? "continuation" : "stopping") << ',' << p.phi << ','
            << p.obstacle << ',' << p.residual << '\n';
    }
}

}  // namespace mvstop
