#pragma once

// Two optimal stopping problems on the conditional mean m_t = E[X(t) | F_t^(1)]:
//
//   sell:  maximize E[ e^{-rho (s + tau)} (m_tau - a) ]
//   quit:  maximize E[ int_0^tau e^{-rho (s + t)} m_t dt ]
//
// with their closed-form solutions, Monte Carlo evaluation of threshold rules
// (either on the particle system or, in fast mode, on the exact scalar
// dynamics of m_t driven by B1 alone) and Dynkin-formula diagnostics.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mvstop/generator.hpp"
#include "mvstop/model.hpp"
#include "mvstop/particle.hpp"

namespace mvstop {

struct SellParams {
    double alpha0 = 0.1;
    double sigma1 = 0.3;
    double sigma2 = 0.2;
    double rho = 0.2;
    double a = 1.0;
    LevyMeasureSpec levy;

    /// Throws std::invalid_argument unless sigma1 > 0, rho > 0, a > 0, alpha0 < rho.
    void validate() const;
};

struct QuitParams {
    double sigma1 = 0.3;
    double sigma2 = 0.2;
    double gamma0 = 0.1;
    double intensity = 0.0;
    double rho = 0.2;

    /// Throws std::invalid_argument unless sigma1 != 0 and rho > 0.
    void validate() const;
};

ModelSpec make_model(const SellParams& params, InitialLaw initial_law);
ModelSpec make_model(const QuitParams& params, InitialLaw initial_law);

struct LambdaRoots {
    double lambda2 = 0.0;  // < 0
    double lambda1 = 0.0;  // > 0
};

/// Roots of alpha0 l + 1/2 sigma1^2 l (l - 1) = rho.
LambdaRoots lambda_roots(double alpha0, double sigma1, double rho);

/// xi* = lambda1 a / (lambda1 - 1). Throws for lambda1 <= 1 or a <= 0.
double sell_threshold(double lambda1, double a);

/// Value of the sell problem at (s, z); throws std::domain_error for z <= 0.
double sell_value(double s, double z, const SellParams& params);

struct QuitThreshold {
    double lambda = 0.0;
    double eta_star = 0.0;
    double c1 = 0.0;
};

/// lambda = sqrt(2 rho / sigma1^2) and the joint solution of the continuity
/// and smooth-fit conditions eta/rho + C1 e^{-lambda eta} = 0,
/// 1/rho - lambda C1 e^{-lambda eta} = 0, i.e. eta* = -1/lambda.
QuitThreshold quit_threshold(const QuitParams& params);

double quit_value(double s, double z, const QuitParams& params);

/// Candidate value functions. An explicit threshold overrides the optimal one
/// (the continuation branch keeps continuity at that threshold).
ValueCandidate sell_candidate(const SellParams& params, std::optional<double> xi = std::nullopt);
ValueCandidate quit_candidate(const QuitParams& params, std::optional<double> eta = std::nullopt);

/// f(s, z) = e^{-rho s} (slope z + intercept), likewise g.
struct Affine {
    double slope = 0.0;
    double intercept = 0.0;
    double operator()(double z) const { return slope * z + intercept; }
    bool is_zero() const { return slope == 0.0 && intercept == 0.0; }
};

struct Reward {
    double rho = 0.0;
    Affine running;   // f
    Affine terminal;  // g

    double f(double s, double z) const;
    double g(double s, double z) const;
};

Reward sell_reward(const SellParams& params);
Reward quit_reward(const QuitParams& params);

/// Exact m_t on the grid times of `common` (length increments + 1):
/// sell m0 exp((alpha0 - sigma1^2/2) t + sigma1 B1(t)), quit x0 + sigma1 B1(t).
std::vector<double> conditional_mean_oracle(const ModelSpec& spec, double m0, const CommonNoisePath& common);

struct StoppingRule {
    enum class Kind { threshold_up, threshold_down, fixed_time, never };

    Kind kind = Kind::never;
    double threshold = 0.0;    // on m
    double stop_time = 0.0;    // fixed_time only
    double horizon_cap = 100.0;

    static StoppingRule up(double threshold, double cap) { return {Kind::threshold_up, threshold, 0.0, cap}; }
    static StoppingRule down(double threshold, double cap) { return {Kind::threshold_down, threshold, 0.0, cap}; }
    static StoppingRule at_time(double t, double cap) { return {Kind::fixed_time, 0.0, t, cap}; }
    static StoppingRule never(double cap) { return {Kind::never, 0.0, 0.0, cap}; }
};

const char* to_string(StoppingRule::Kind kind);

enum class SimMode { fast, particle };

const char* to_string(SimMode mode);

struct SimConfig {
    SimMode mode = SimMode::fast;
    std::size_t n = 1000;             // particles (particle mode)
    double dt = 1e-3;
    std::size_t replications = 1000;
    std::uint64_t seed = 1;
    double s = 0.0;                   // starting calendar time
    std::optional<double> floor_epsilon;
    Exec exec = Exec::parallel;
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t replications = 0;
    double truncation_fraction = 0.0;
    /// Mean when paths reaching the cap receive no terminal payoff.
    double mean_zero_at_cap = 0.0;
    std::size_t floor_events = 0;
};

/// Monte Carlo estimate of J^tau(s, m0) for the rule. Replication r uses
/// streams (seed, r); m0 is the mean of spec.initial_law().
McEstimate evaluate_rule_mc(const ModelSpec& spec, const StoppingRule& rule, const Reward& reward,
                            const SimConfig& config);

struct SweepRow {
    double threshold = 0.0;
    McEstimate estimate;
};

struct SweepResult {
    StoppingRule::Kind kind = StoppingRule::Kind::threshold_up;
    std::vector<SweepRow> rows;  // in the order given
    std::size_t argmax = 0;

    double argmax_threshold() const { return rows.at(argmax).threshold; }
};

/// Evaluates one threshold rule per grid value on common random numbers.
/// Fast mode walks each path once for all thresholds; the estimates equal
/// separate evaluate_rule_mc calls with the same config.
SweepResult threshold_sweep(const ModelSpec& spec, StoppingRule::Kind kind, std::span<const double> thresholds,
                            double horizon_cap, const Reward& reward, const SimConfig& config);

/// Index distance between the sweep argmax and the grid cell containing `target`.
/// Zero when the argmax is an endpoint of that cell.
std::size_t cells_from(const SweepResult& sweep, double target);

struct CsvContext {
    std::string model;
    std::size_t n = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
};

/// (model, threshold, mean, std_error, replications, truncation_fraction, dt, n, seed)
void write_sweep_csv(std::ostream& out, const SweepResult& sweep, const CsvContext& ctx);

enum class Region { continuation, stopping };

const char* to_string(Region region);

struct DynkinEstimate {
    double residual = 0.0;   // E[phi(Y_T') + int f] - phi(y), T' = horizon or region exit
    double std_error = 0.0;
    double rate = 0.0;       // residual / horizon
    double rate_std_error = 0.0;
    double exit_fraction = 0.0;
    std::size_t replications = 0;
};

/// Dynkin-formula drift of phi(Y) + int f over [0, horizon], each path
/// stopped when it leaves `region` of the candidate. Running profit uses the
/// trapezoid rule.
DynkinEstimate dynkin_residual(const ModelSpec& spec, const ValueCandidate& phi, const Reward& reward,
                               const SimConfig& config, Region region, double horizon);

}  // namespace mvstop
