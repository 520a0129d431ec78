#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mvstop/error.hpp"
#include "mvstop/fokker_planck.hpp"
#include "mvstop/particle.hpp"

using namespace mvstop;

namespace {

double gauss(double x, double mean, double sd) {
    const double u = (x - mean) / sd;
    return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

GridDensity gaussian_density(const UniformGrid& grid, double mean, double sd) {
    GridDensity d{grid, std::vector<double>(grid.size()), 0.0};
    for (std::size_t i = 0; i < grid.size(); ++i) d.values[i] = gauss(grid.node(i), mean, sd);
    return d;
}

double integral(const UniformGrid& grid, const std::vector<double>& v) { return trapezoid(grid, v); }

double first_moment_of(const UniformGrid& grid, const std::vector<double>& v) {
    std::vector<double> xv(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) xv[i] = grid.node(i) * v[i];
    return trapezoid(grid, xv);
}

}  // namespace

TEST_CASE("operators vanish when every coefficient vanishes") {
    // Sell coefficients are proportional to the mean, zero for a centered density.
    const auto spec = make_sell_model(0.2, 0.4, 0.3, {1.0, MarkDistribution::constant(-0.3)}, InitialLaw::dirac(0.0));
    const auto d = gaussian_density({-4.0, 4.0, 800}, 0.0, 0.5);
    for (double v : apply_A0_star(d, spec)) CHECK(std::fabs(v) < 1e-14);
    for (double v : apply_A1_star(d, spec)) CHECK(std::fabs(v) < 1e-14);

    GridDensity same = d;
    step_spide(same, spec, 1e-4, 0.0);
    for (std::size_t i = 0; i < d.values.size(); ++i) CHECK(same.values[i] == doctest::Approx(d.values[i]).epsilon(1e-12));
}

TEST_CASE("pure diffusion matches the heat-equation time derivative to second order") {
    const double s1 = 0.3, s2 = 0.2, sd = 0.5;
    const auto spec = make_quit_model(s1, s2, 0.0, 0.0, InitialLaw::dirac(0.0));
    auto max_error = [&](std::size_t cells) {
        const UniformGrid grid{-5.0, 5.0, cells};
        const auto d = gaussian_density(grid, 0.0, sd);
        const auto rate = apply_A0_star(d, spec);
        double worst = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double x = grid.node(i);
            // d/dt of the heat kernel: 1/2 (s1^2 + s2^2) rho''.
            const double exact = 0.5 * (s1 * s1 + s2 * s2) * gauss(x, 0.0, sd) * (x * x / std::pow(sd, 4) - 1.0 / (sd * sd));
            worst = std::max(worst, std::fabs(rate[i] - exact));
        }
        return worst;
    };
    const double coarse = max_error(250);
    const double fine = max_error(500);
    CHECK(fine < 1e-3);
    CHECK(coarse / fine == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("divergence-form operators conserve mass") {
    const UniformGrid grid{-6.0, 8.0, 1400};
    const auto d = gaussian_density(grid, 1.2, 0.6);
    const auto sell = make_sell_model(0.1, 0.3, 0.2, {2.0, MarkDistribution::uniform(-0.5, -0.1)}, InitialLaw::dirac(1.0));
    const auto quit = make_quit_model(0.3, 0.2, 0.4, 1.5, InitialLaw::dirac(0.0));
    for (const ModelSpec* spec : {&sell, &quit}) {
        CHECK(std::fabs(integral(grid, apply_A0_star(d, *spec))) < 1e-8);
        CHECK(std::fabs(integral(grid, apply_A1_star(d, *spec))) < 1e-8);
    }
}

TEST_CASE("A1* with constant beta1 is the exact derivative of a quadratic profile") {
    const double s1 = 0.3;
    const auto spec = make_quit_model(s1, 0.0, 0.0, 0.0, InitialLaw::dirac(0.0));
    const UniformGrid grid{-2.0, 2.0, 400};
    GridDensity d{grid, std::vector<double>(grid.size()), 0.0};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid.node(i);
        d.values[i] = std::fabs(x) < 1.0 ? 0.75 * (1.0 - x * x) : 0.0;
    }
    const auto rate = apply_A1_star(d, spec);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double x = grid.node(i);
        if (std::fabs(x) < 1.0 - 1.5 * grid.dx()) {
            // -s1 rho'(x) = -s1 * 0.75 * (-2x)
            CHECK(rate[i] == doctest::Approx(1.5 * s1 * x).epsilon(1e-9).scale(1.0));
        }
    }
}

TEST_CASE("first moment of A0* rho equals <rho, alpha>") {
    const UniformGrid grid{-6.0, 8.0, 1400};
    const auto d = gaussian_density(grid, 1.2, 0.6);
    const double m = first_moment(d);
    const auto sell = make_sell_model(0.1, 0.3, 0.2, {2.0, MarkDistribution::uniform(-0.5, -0.1)}, InitialLaw::dirac(1.0));
    CHECK(first_moment_of(grid, apply_A0_star(d, sell)) == doctest::Approx(0.1 * m).epsilon(1e-6));
    const auto quit = make_quit_model(0.3, 0.2, 0.4, 1.5, InitialLaw::dirac(0.0));
    CHECK(std::fabs(first_moment_of(grid, apply_A0_star(d, quit))) < 1e-6);
}

TEST_CASE("SPIDE mean follows the conditional-mean oracle and conserves mass") {
    const double s1 = 0.3, x0 = 0.2, dt = 1e-4, T = 0.5;
    const auto spec = make_quit_model(s1, 0.0, 0.0, 0.0, InitialLaw::dirac(x0));
    const UniformGrid grid{-3.0, 3.0, 600};
    auto d = gaussian_density(grid, x0, 0.1);
    const auto path = CommonNoisePath::generate(123, 0, dt, static_cast<std::size_t>(T / dt));
    double worst_defect = 0.0;
    double b = 0.0;
    for (double db : path.increments) {
        const auto rep = step_spide(d, spec, dt, db);
        worst_defect = std::max(worst_defect, rep.mass_defect);
        b += db;
    }
    CHECK(worst_defect < 1e-6);
    CHECK(d.time == doctest::Approx(T));
    CHECK(first_moment(d) == doctest::Approx(x0 + s1 * b).epsilon(grid.dx() + std::sqrt(dt)).scale(1.0));
}

TEST_CASE("SPIDE rejects steps beyond the CFL bound and mass at the boundary") {
    const auto spec = make_quit_model(1.0, 0.0, 0.0, 0.0, InitialLaw::dirac(0.0));
    auto d = gaussian_density({-4.0, 4.0, 400}, 0.0, 0.5);
    CHECK(max_stable_dt(d, spec) == doctest::Approx(0.25 * 0.02 * 0.02));
    CHECK_THROWS_AS(step_spide(d, spec, 1e-3, 0.0), std::invalid_argument);

    auto wide = gaussian_density({-1.0, 1.0, 200}, 0.0, 0.5);
    CHECK_THROWS_AS(apply_A0_star(wide, spec), NumericalAbort);
}

TEST_CASE("L1 comparison") {
    const UniformGrid grid{-4.0, 4.0, 800};
    const auto a = gaussian_density(grid, -2.0, 0.2);
    const auto b = gaussian_density(grid, 2.0, 0.2);
    CHECK(compare_to_particles(a, a) == 0.0);
    CHECK(compare_to_particles(a, b) == doctest::Approx(2.0).epsilon(1e-6));
    const auto c = gaussian_density({-4.0, 4.0, 400}, 0.0, 0.5);
    CHECK_THROWS_AS(compare_to_particles(a, c), std::invalid_argument);
}

TEST_CASE("serial and parallel operator application agree exactly") {
    const auto spec = make_sell_model(0.1, 0.3, 0.2, {2.0, MarkDistribution::constant(-0.2)}, InitialLaw::dirac(1.0));
    const auto d = gaussian_density({-3.0, 5.0, 800}, 1.0, 0.4);
    CHECK(apply_A0_star(d, spec, {.exec = Exec::serial}) == apply_A0_star(d, spec, {.exec = Exec::parallel}));
    CHECK(apply_A1_star(d, spec, {.exec = Exec::serial}) == apply_A1_star(d, spec, {.exec = Exec::parallel}));
}
