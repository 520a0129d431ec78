#pragma once

// Infinitesimal generator of Y(t) = (s + t, X(t), mu_t) on cylinder functions
//
//   phi(s, x, mu) = psi(s) * [ F(<mu, q>) + h(x) ],
//
// where the h(x) part is optional. With m = <mu, q> and the adjoint moves
// <A0* mu, q> = <mu, A0 q> = a(m), <A1* mu, q> = <mu, A1 q> = b(m),
//
//   G phi = psi'(s) [F(m) + h(x)] + psi(s) [ F'(m) a(m) + 1/2 F''(m) b(m)^2 ]
//           + psi(s) [ alpha h' + 1/2 (beta1^2 + beta2^2) h''
//                      + int { h(x + gamma) - h(x) - gamma h'(x) } nu(dzeta) ].
//
// For q(x) = x: sell model a(m) = alpha0 m, b(m) = sigma1 m; quit model
// a(m) = 0, b(m) = sigma1.

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvstop/model.hpp"

namespace mvstop {

using ScalarFn = std::function<double(double)>;
/// Function of (s, z) with z = <mu, q>; used for running profits and obstacles.
using ScalarField = std::function<double(double, double)>;

struct XPart {
    ScalarFn h;
    ScalarFn dh;
    ScalarFn d2h;
};

struct CylinderFunction {
    ScalarFn psi;
    ScalarFn dpsi;
    ScalarFn F;
    ScalarFn dF;
    ScalarFn d2F;
    ScalarFn q = [](double x) { return x; };
    std::optional<XPart> x_part;

    double value(double s, double z, double x = 0.0) const {
        return psi(s) * (F(z) + (x_part ? x_part->h(x) : 0.0));
    }
    /// d/dz of the value.
    double dz(double s, double z) const { return psi(s) * dF(z); }

    /// psi(s) = exp(-rho s).
    static CylinderFunction discounted(double rho, ScalarFn F, ScalarFn dF, ScalarFn d2F);
};

/// Largest relative gap between the supplied derivatives (psi', F', F'') and
/// central differences at the probe points; relative to max(1, |analytic|).
double derivative_mismatch(const CylinderFunction& phi, std::span<const double> zs, std::span<const double> ss);

/// Df(mu)(h) = F'(<mu,q>) <h,q>.
double frechet_gradient_cylinder(const ScalarFn& dF, double z, double h_pairing);

/// D^2 f(mu)(h,k) = F''(<mu,q>) <h,q> <k,q>.
double frechet_hessian_cylinder(const ScalarFn& d2F, double z, double h_pairing, double k_pairing);

struct AdjointCoefficients {
    double a = 0.0;  // <mu, A0 q>
    double b = 0.0;  // <mu, A1 q>
};

/// Closed-form <mu, A0 q>, <mu, A1 q> for q(x) = x in the shipped families.
AdjointCoefficients adjoint_coefficients(const ModelSpec& spec, double z);

/// G phi at (s, x, mu) with <mu, q> = z. x only matters when phi has an x part.
double apply_generator_cylinder(const CylinderFunction& phi, double s, double z, const ModelSpec& spec,
                                double x = 0.0);

/// Piecewise candidate value function: `continuation` on the continuation
/// region {z < boundary} or {z > boundary}, `stopping` elsewhere.
struct ValueCandidate {
    enum class Side { below, above };

    CylinderFunction continuation;
    CylinderFunction stopping;
    double boundary = 0.0;
    Side continuation_side = Side::below;

    bool in_continuation(double z) const {
        return continuation_side == Side::below ? z < boundary : z > boundary;
    }
    const CylinderFunction& branch(double z) const { return in_continuation(z) ? continuation : stopping; }
    double value(double s, double z) const { return branch(z).value(s, z); }
    double generator(double s, double z, const ModelSpec& spec) const {
        return apply_generator_cylinder(branch(z), s, z, spec);
    }
};

struct ProbeGrid {
    double z_min = 0.01;
    double z_max = 20.0;
    std::size_t z_count = 200;
    bool log_spaced = true;
    double s_min = 0.0;
    double s_max = 5.0;
    std::size_t s_count = 20;

    std::vector<double> z_values() const;
    std::vector<double> s_values() const;
};

struct ProbeSample {
    double s = 0.0;
    double z = 0.0;
    bool continuation = false;
    double phi = 0.0;
    double obstacle = 0.0;
    double residual = 0.0;  // G phi + f
};

struct RegionSummary {
    std::size_t probes = 0;
    double max_abs_residual = 0.0;
    double min_residual = 0.0;
    double max_residual = 0.0;
};

struct VarIneqReport {
    RegionSummary continuation;
    RegionSummary stopping;
    std::size_t obstacle_violations = 0;  // probes with phi < g - tol
    double min_obstacle_gap = 0.0;        // min over probes of phi - g
    double continuity_gap = 0.0;          // |phi(boundary-) - phi(boundary+)|, max over s
    double smooth_fit_gap = 0.0;          // |d_z phi(boundary-) - d_z phi(boundary+)|, max over s
    double tol = 0.0;
    double fit_tol = 0.0;
    std::vector<ProbeSample> samples;

    /// True when any checked condition fails.
    bool flagged() const;
};

struct VarIneqTolerances {
    double residual = 1e-10;
    double obstacle = 1e-12;
    double fit = 1e-8;
};

/// Checks phi >= g everywhere, G phi + f = 0 on the continuation region,
/// G phi + f <= 0 on the stopping region, and C^1 pasting at the boundary.
VarIneqReport check_variational_inequalities(const ValueCandidate& phi, const ScalarField& g, const ScalarField& f,
                                             const ModelSpec& spec, const ProbeGrid& probes,
                                             const VarIneqTolerances& tol = {});

nlohmann::json to_json(const VarIneqReport& report);
void write_probe_csv(std::ostream& out, const VarIneqReport& report);

}  // namespace mvstop
