#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "mvstop/generator.hpp"
#include "mvstop/stopping.hpp"

using namespace mvstop;

namespace {

// Signed discrete measure sum_j w_j delta_{x_j}.
struct DiscreteMeasure {
    std::vector<double> atoms;
    std::vector<double> weights;

    template <class Q>
    double pair(Q&& q) const {
        double s = 0.0;
        for (std::size_t j = 0; j < atoms.size(); ++j) s += weights[j] * q(atoms[j]);
        return s;
    }
};

// mu + a h + b k as a single atom list.
DiscreteMeasure combine(const DiscreteMeasure& mu, double a, const DiscreteMeasure& h, double b,
                        const DiscreteMeasure& k) {
    DiscreteMeasure out = mu;
    for (std::size_t j = 0; j < h.atoms.size(); ++j) {
        out.atoms.push_back(h.atoms[j]);
        out.weights.push_back(a * h.weights[j]);
    }
    for (std::size_t j = 0; j < k.atoms.size(); ++j) {
        out.atoms.push_back(k.atoms[j]);
        out.weights.push_back(b * k.weights[j]);
    }
    return out;
}

struct RandomCylinder {
    double c[6];
    double F(double z) const { return c[0] * z * z + c[1] * z * z * z + c[2] * std::sin(c[3] * z) + c[4] * std::exp(c[5] * z); }
    double dF(double z) const {
        return 2 * c[0] * z + 3 * c[1] * z * z + c[2] * c[3] * std::cos(c[3] * z) + c[4] * c[5] * std::exp(c[5] * z);
    }
    double d2F(double z) const {
        return 2 * c[0] + 6 * c[1] * z - c[2] * c[3] * c[3] * std::sin(c[3] * z) + c[4] * c[5] * c[5] * std::exp(c[5] * z);
    }
};

CylinderFunction power_function(double lambda, ScalarFn psi, ScalarFn dpsi) {
    CylinderFunction phi;
    phi.psi = std::move(psi);
    phi.dpsi = std::move(dpsi);
    phi.F = [=](double z) { return std::pow(z, lambda); };
    phi.dF = [=](double z) { return lambda * std::pow(z, lambda - 1.0); };
    phi.d2F = [=](double z) { return lambda * (lambda - 1.0) * std::pow(z, lambda - 2.0); };
    return phi;
}

}  // namespace

TEST_CASE("Frechet derivatives of the worked examples") {
    const ScalarFn sq_d1 = [](double z) { return 2.0 * z; };
    const ScalarFn sq_d2 = [](double) { return 2.0; };
    const ScalarFn id_d1 = [](double) { return 1.0; };
    const ScalarFn id_d2 = [](double) { return 0.0; };
    const ScalarFn const_d1 = [](double) { return 0.0; };

    // f(mu) = <mu,q>^2: Df(mu)(h) = 2 <mu,q><h,q>, D^2 f(mu)(h,k) = 2 <h,q><k,q>.
    CHECK(frechet_gradient_cylinder(sq_d1, 3.0, 0.5) == 3.0);
    CHECK(frechet_hessian_cylinder(sq_d2, 7.0, 1.0, 2.0) == 4.0);
    // g(mu) = <mu,q>: Dg(mu)(h) = <h,q>, D^2 g = 0.
    for (double z : {-2.0, 0.0, 5.0}) {
        CHECK(frechet_gradient_cylinder(id_d1, z, 0.37) == 0.37);
        CHECK(frechet_hessian_cylinder(id_d2, z, 0.37, 1.2) == 0.0);
        CHECK(frechet_gradient_cylinder(const_d1, z, 0.37) == 0.0);
    }
    const auto pow2 = power_function(2.0, [](double) { return 1.0; }, [](double) { return 0.0; });
    CHECK(frechet_hessian_cylinder(pow2.d2F, 7.0, 1.0, 2.0) == 4.0);
    CHECK(frechet_hessian_cylinder(pow2.d2F, 7.0, 1.0, 2.0) == frechet_hessian_cylinder(pow2.d2F, 7.0, 2.0, 1.0));
}

TEST_CASE("Frechet derivatives match finite differences along measure perturbations") {
    std::mt19937_64 gen(42);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double eps1 = 1e-5;
    const double eps2 = 2e-4;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        RandomCylinder f;
        for (double& c : f.c) c = u(gen);
        const bool square_q = trial % 2 == 1;
        auto q = [&](double x) { return square_q ? x * x : x; };

        DiscreteMeasure mu, h, k;
        for (int j = 0; j < 5; ++j) {
            mu.atoms.push_back(1.5 * u(gen));
            mu.weights.push_back(0.2);
            h.atoms.push_back(u(gen));
            h.weights.push_back(0.5 * u(gen));
            k.atoms.push_back(u(gen));
            k.weights.push_back(0.5 * u(gen));
        }
        const double z = mu.pair(q);
        const double hq = h.pair(q);
        const double kq = k.pair(q);
        auto F_at = [&](double a, double b) { return f.F(combine(mu, a, h, b, k).pair(q)); };

        const double grad_fd = (F_at(eps1, 0.0) - F_at(-eps1, 0.0)) / (2.0 * eps1);
        const double grad = frechet_gradient_cylinder([&](double x) { return f.dF(x); }, z, hq);
        const double hess_fd =
            (F_at(eps2, eps2) - F_at(eps2, -eps2) - F_at(-eps2, eps2) + F_at(-eps2, -eps2)) / (4.0 * eps2 * eps2);
        const double hess = frechet_hessian_cylinder([&](double x) { return f.d2F(x); }, z, hq, kq);

        worst = std::max(worst, std::fabs(grad_fd - grad) / std::max(1.0, std::fabs(grad)));
        worst = std::max(worst, std::fabs(hess_fd - hess) / std::max(1.0, std::fabs(hess)));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("generator on the sell value candidate vanishes") {
    const double alpha0 = 0.1, sigma1 = 0.3, rho = 0.2;
    const auto spec = make_sell_model(alpha0, sigma1, 0.2, {1.0, MarkDistribution::constant(-0.2)}, InitialLaw::dirac(1.0));
    const double l1 = lambda_roots(alpha0, sigma1, rho).lambda1;
    const auto phi = power_function(l1, [=](double s) { return std::exp(-rho * s); },
                                    [=](double s) { return -rho * std::exp(-rho * s); });
    for (double s : {0.0, 0.7, 3.0}) {
        for (double z : {0.05, 0.5, 1.0, 2.0, 2.7}) CHECK(std::fabs(apply_generator_cylinder(phi, s, z, spec)) < 1e-10);
    }
}

TEST_CASE("generator of the conditional mean in the sell model is its drift") {
    const double alpha0 = 0.13;
    const auto spec = make_sell_model(alpha0, 0.3, 0.2, LevyMeasureSpec::none(), InitialLaw::dirac(1.0));
    const auto phi = power_function(1.0, [](double) { return 1.0; }, [](double) { return 0.0; });
    for (double z : {0.1, 1.0, 4.0}) CHECK(apply_generator_cylinder(phi, 0.0, z, spec) == doctest::Approx(alpha0 * z));
}

TEST_CASE("generator on the quit solution balances the running profit") {
    const double sigma1 = 0.3, rho = 0.2, c1 = 0.7;
    const auto spec = make_quit_model(sigma1, 0.2, 0.1, 1.0, InitialLaw::dirac(0.0));
    const double lambda = std::sqrt(2.0 * rho / (sigma1 * sigma1));
    const auto phi = CylinderFunction::discounted(
        rho, [=](double z) { return z / rho + c1 * std::exp(-lambda * z); },
        [=](double z) { return 1.0 / rho - lambda * c1 * std::exp(-lambda * z); },
        [=](double z) { return lambda * lambda * c1 * std::exp(-lambda * z); });
    for (double s : {0.0, 1.0, 4.0}) {
        for (double z : {-0.4, 0.0, 0.8, 3.0}) {
            CHECK(std::fabs(apply_generator_cylinder(phi, s, z, spec) + std::exp(-rho * s) * z) < 1e-10);
        }
    }
}

TEST_CASE("generator on power functions reproduces the bracket formula") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double alpha0 = -0.5 + u(gen), sigma1 = 0.05 + u(gen), lambda = -3.0 + 6.0 * u(gen);
        const double rho = 0.01 + u(gen), s = 5.0 * u(gen), z = 0.05 + 4.0 * u(gen);
        const auto spec = make_sell_model(alpha0, sigma1, 0.1, LevyMeasureSpec::none(), InitialLaw::dirac(1.0));
        const auto phi = power_function(lambda, [=](double t) { return std::exp(-rho * t); },
                                        [=](double t) { return -rho * std::exp(-rho * t); });
        const double psi = std::exp(-rho * s);
        const double expected =
            std::pow(z, lambda) * (-rho * psi + psi * (alpha0 * lambda + 0.5 * sigma1 * sigma1 * lambda * (lambda - 1.0)));
        CHECK(apply_generator_cylinder(phi, s, z, spec) == doctest::Approx(expected).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("generator is linear") {
    const auto spec = make_sell_model(0.05, 0.4, 0.1, LevyMeasureSpec::none(), InitialLaw::dirac(1.0));
    const auto p1 = power_function(1.7, [](double s) { return std::exp(-0.3 * s); }, [](double s) { return -0.3 * std::exp(-0.3 * s); });
    const auto p2 = power_function(-0.4, [](double s) { return std::exp(-0.3 * s); }, [](double s) { return -0.3 * std::exp(-0.3 * s); });
    const double a = 2.5, b = -1.25;
    CylinderFunction mix = p1;
    mix.F = [&](double z) { return a * p1.F(z) + b * p2.F(z); };
    mix.dF = [&](double z) { return a * p1.dF(z) + b * p2.dF(z); };
    mix.d2F = [&](double z) { return a * p1.d2F(z) + b * p2.d2F(z); };
    for (double z : {0.3, 1.0, 2.2}) {
        const double lhs = apply_generator_cylinder(mix, 0.4, z, spec);
        const double rhs = a * apply_generator_cylinder(p1, 0.4, z, spec) + b * apply_generator_cylinder(p2, 0.4, z, spec);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
    }
}

TEST_CASE("x part adds the local generator of X") {
    const double s1 = 0.3, s2 = 0.2, gamma0 = 0.1, intensity = 1.5;
    const auto spec = make_quit_model(s1, s2, gamma0, intensity, InitialLaw::dirac(0.0));
    CylinderFunction phi = power_function(1.0, [](double) { return 1.0; }, [](double) { return 0.0; });
    phi.x_part = XPart{[](double x) { return x * x; }, [](double x) { return 2.0 * x; }, [](double) { return 2.0; }};
    // a(z) = 0 in the quit model; h = x^2 gives (s1^2 + s2^2) + intensity gamma0^2.
    CHECK(apply_generator_cylinder(phi, 0.0, 0.5, spec, 1.3) ==
          doctest::Approx(s1 * s1 + s2 * s2 + intensity * gamma0 * gamma0));
}

TEST_CASE("supplied derivatives of the shipped candidates agree with finite differences") {
    const SellParams sell;
    const QuitParams quit;
    const auto sc = sell_candidate(sell);
    const auto qc = quit_candidate(quit);
    const std::vector<double> zs_sell{0.1, 0.5, 1.0, 2.0, 2.6};
    const std::vector<double> zs_quit{-0.4, 0.0, 1.0, 3.0};
    const std::vector<double> ss{0.0, 1.0, 5.0};
    CHECK(derivative_mismatch(sc.continuation, zs_sell, ss) < 1e-6);
    CHECK(derivative_mismatch(sc.stopping, zs_sell, ss) < 1e-6);
    CHECK(derivative_mismatch(qc.continuation, zs_quit, ss) < 1e-6);

    auto wrong = sc.continuation;
    wrong.dF = [](double) { return 0.0; };
    CHECK(derivative_mismatch(wrong, zs_sell, ss) > 1e-3);
}

TEST_CASE("variational inequalities for the sell candidate") {
    const SellParams params;
    const auto spec = make_model(params, InitialLaw::dirac(1.0));
    const auto reward = sell_reward(params);
    const ScalarField g = [&](double s, double z) { return reward.g(s, z); };
    const ScalarField f = [&](double s, double z) { return reward.f(s, z); };
    const ProbeGrid probes;  // 200 x 20, log-spaced z in [0.01, 20]

    const auto report = check_variational_inequalities(sell_candidate(params), g, f, spec, probes);
    CHECK_FALSE(report.flagged());
    CHECK(report.obstacle_violations == 0);
    CHECK(report.continuation.probes > 0);
    CHECK(report.stopping.probes > 0);
    CHECK(report.continuation.max_abs_residual < 1e-10);
    CHECK(report.stopping.max_residual <= 1e-10);
    CHECK(report.smooth_fit_gap < 1e-8);
    CHECK(report.continuity_gap < 1e-8);

    const double xi = sell_threshold(lambda_roots(params.alpha0, params.sigma1, params.rho).lambda1, params.a);
    const auto bad = check_variational_inequalities(sell_candidate(params, xi + 0.5), g, f, spec, probes);
    CHECK(bad.flagged());
    CHECK(bad.smooth_fit_gap > 1e-3);
    CHECK(bad.obstacle_violations > 0);

    const auto json = to_json(report);
    CHECK(json.at("flagged") == false);
    CHECK(json.at("sample_points") == probes.z_count * probes.s_count);
    std::ostringstream csv;
    write_probe_csv(csv, report);
    CHECK(csv.str().rfind("s,z,region,phi,obstacle,residual\n", 0) == 0);
}

TEST_CASE("variational inequalities for the quit candidate") {
    const QuitParams params;
    const auto spec = make_model(params, InitialLaw::dirac(0.0));
    const auto reward = quit_reward(params);
    const ScalarField g = [&](double s, double z) { return reward.g(s, z); };
    const ScalarField f = [&](double s, double z) { return reward.f(s, z); };
    const ProbeGrid probes{.z_min = -3.0, .z_max = 5.0, .z_count = 400, .log_spaced = false};
    const auto report = check_variational_inequalities(quit_candidate(params), g, f, spec, probes);
    CHECK_FALSE(report.flagged());
    CHECK(report.continuation.max_abs_residual < 1e-10);
    CHECK(report.stopping.max_residual < 0.0);
    CHECK(report.min_obstacle_gap >= 0.0);
    CHECK(report.smooth_fit_gap < 1e-8);

    const auto q = quit_threshold(params);
    const auto bad = check_variational_inequalities(quit_candidate(params, q.eta_star - 0.3), g, f, spec, probes);
    CHECK(bad.flagged());
}
