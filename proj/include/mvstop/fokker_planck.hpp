#pragma once

// Finite-difference solver for the stochastic Fokker-Planck equation
//
//   d rho = A0* rho dt + A1* rho dB1,
//   A0* rho = -D[alpha rho] + 1/2 D^2[(beta1^2 + beta2^2) rho]
//             + int { rho(. - gamma) - rho + D[gamma rho] } nu(dzeta),
//   A1* rho = -D[beta1 rho],
//
// on a uniform grid with central differences and zero values beyond the
// edges. Coefficients are evaluated with m taken as the density's own first
// moment.

#include <ostream>
#include <vector>

#include "mvstop/grid.hpp"
#include "mvstop/model.hpp"

namespace mvstop {

struct SpideOptions {
    double cfl = 0.25;            // dt <= cfl * dx^2 / max(beta1^2 + beta2^2)
    double boundary_tol = 1e-6;   // mass allowed in the outer edge band
    std::size_t edge_cells = 5;
    double blowup_cap = 1e8;
    Exec exec = Exec::parallel;
};

/// Rate field A0* rho. Throws NumericalAbort when mass reaches the edges.
std::vector<double> apply_A0_star(const GridDensity& density, const ModelSpec& spec,
                                  const SpideOptions& options = {});

/// Rate field A1* rho = -D[beta1 rho].
std::vector<double> apply_A1_star(const GridDensity& density, const ModelSpec& spec,
                                  const SpideOptions& options = {});

struct SpideStepReport {
    double mass_defect = 0.0;   // |mass after linear update - mass before|
    double clipped_mass = 0.0;  // mass removed by clipping negative values
};

/// rho <- rho + A0* rho dt + A1* rho dB1, then clip at 0 and renormalize.
/// Throws std::invalid_argument when dt breaks the CFL bound and
/// NumericalAbort on blow-up.
SpideStepReport step_spide(GridDensity& density, const ModelSpec& spec, double dt, double dB1,
                           const SpideOptions& options = {});

/// Largest dt the explicit scheme accepts for this density.
double max_stable_dt(const GridDensity& density, const ModelSpec& spec, const SpideOptions& options = {});

/// Trapezoid-rule L1 distance. Throws std::invalid_argument on grid mismatch.
double compare_to_particles(const GridDensity& density, const GridDensity& kde);

/// CSV rows (x, value).
void write_density_csv(std::ostream& out, const GridDensity& density);

}  // namespace mvstop
