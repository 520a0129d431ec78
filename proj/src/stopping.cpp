#include "mvstop/stopping.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "mvstop/reduce.hpp"

namespace mvstop {

void SellParams::validate() const {
    if (!(sigma1 > 0.0)) throw std::invalid_argument("sell: sigma1 > 0 required");
    if (!(sigma2 >= 0.0)) throw std::invalid_argument("sell: sigma2 >= 0 required");
    if (!(rho > 0.0)) throw std::invalid_argument("sell: rho > 0 required");
    if (!(a > 0.0)) throw std::invalid_argument("sell: a > 0 required");
    if (!(alpha0 < rho)) throw std::invalid_argument("sell: alpha0 < rho required");
}

void QuitParams::validate() const {
    if (sigma1 == 0.0 || !std::isfinite(sigma1)) throw std::invalid_argument("quit: sigma1 != 0 required");
    if (!(rho > 0.0)) throw std::invalid_argument("quit: rho > 0 required");
    if (!(intensity >= 0.0)) throw std::invalid_argument("quit: intensity >= 0 required");
}

ModelSpec make_model(const SellParams& params, InitialLaw initial_law) {
    params.validate();
    return make_sell_model(params.alpha0, params.sigma1, params.sigma2, params.levy, initial_law);
}

ModelSpec make_model(const QuitParams& params, InitialLaw initial_law) {
    params.validate();
    return make_quit_model(params.sigma1, params.sigma2, params.gamma0, params.intensity, initial_law);
}

LambdaRoots lambda_roots(double alpha0, double sigma1, double rho) {
    if (!(sigma1 > 0.0)) throw std::invalid_argument("lambda_roots: sigma1 > 0 required");
    if (!(rho > 0.0)) throw std::invalid_argument("lambda_roots: rho > 0 required");
    const double s2 = sigma1 * sigma1;
    const double b = 0.5 * s2 - alpha0;
    const double disc = std::sqrt(b * b + 2.0 * rho * s2);
    // Larger-magnitude root directly, the other from l1 l2 = -2 rho / sigma1^2.
    LambdaRoots r;
    if (b >= 0.0) {
        r.lambda1 = (b + disc) / s2;
        r.lambda2 = -2.0 * rho / (s2 * r.lambda1);
    } else {
        r.lambda2 = (b - disc) / s2;
        r.lambda1 = -2.0 * rho / (s2 * r.lambda2);
    }
    return r;
}

double sell_threshold(double lambda1, double a) {
    if (!(lambda1 > 1.0)) throw std::invalid_argument("sell_threshold: lambda1 > 1 required");
    if (!(a > 0.0)) throw std::invalid_argument("sell_threshold: a > 0 required");
    return lambda1 * a / (lambda1 - 1.0);
}

double sell_value(double s, double z, const SellParams& params) {
    if (!(z > 0.0)) throw std::domain_error("sell_value: z > 0 required");
    const double l1 = lambda_roots(params.alpha0, params.sigma1, params.rho).lambda1;
    const double xi = sell_threshold(l1, params.a);
    const double disc = std::exp(-params.rho * s);
    if (z <= xi) return disc * (xi - params.a) * std::pow(z / xi, l1);
    return disc * (z - params.a);
}

QuitThreshold quit_threshold(const QuitParams& params) {
    if (params.sigma1 == 0.0) throw std::invalid_argument("quit_threshold: sigma1 != 0 required");
    if (!(params.rho > 0.0)) throw std::invalid_argument("quit_threshold: rho > 0 required");
    QuitThreshold q;
    q.lambda = std::sqrt(2.0 * params.rho / (params.sigma1 * params.sigma1));
    q.eta_star = -1.0 / q.lambda;
    q.c1 = -(q.eta_star / params.rho) * std::exp(q.lambda * q.eta_star);
    return q;
}

double quit_value(double s, double z, const QuitParams& params) {
    const auto q = quit_threshold(params);
    if (z < q.eta_star) return 0.0;
    return std::exp(-params.rho * s) * (z / params.rho + q.c1 * std::exp(-q.lambda * z));
}

ValueCandidate sell_candidate(const SellParams& params, std::optional<double> xi_override) {
    const double l = lambda_roots(params.alpha0, params.sigma1, params.rho).lambda1;
    const double xi = xi_override.value_or(sell_threshold(l, params.a));
    const double a = params.a;
    const double c = xi - a;
    ValueCandidate cand;
    cand.boundary = xi;
    cand.continuation_side = ValueCandidate::Side::below;
    cand.continuation = CylinderFunction::discounted(
        params.rho, [=](double z) { return c * std::pow(z / xi, l); },
        [=](double z) { return l * c / xi * std::pow(z / xi, l - 1.0); },
        [=](double z) { return l * (l - 1.0) * c / (xi * xi) * std::pow(z / xi, l - 2.0); });
    cand.stopping = CylinderFunction::discounted(
        params.rho, [=](double z) { return z - a; }, [](double) { return 1.0; }, [](double) { return 0.0; });
    return cand;
}

ValueCandidate quit_candidate(const QuitParams& params, std::optional<double> eta_override) {
    const auto q = quit_threshold(params);
    const double rho = params.rho;
    const double l = q.lambda;
    const double eta = eta_override.value_or(q.eta_star);
    const double c1 = eta_override ? -(eta / rho) * std::exp(l * eta) : q.c1;
    ValueCandidate cand;
    cand.boundary = eta;
    cand.continuation_side = ValueCandidate::Side::above;
    cand.continuation = CylinderFunction::discounted(
        rho, [=](double z) { return z / rho + c1 * std::exp(-l * z); },
        [=](double z) { return 1.0 / rho - l * c1 * std::exp(-l * z); },
        [=](double z) { return l * l * c1 * std::exp(-l * z); });
    cand.stopping = CylinderFunction::discounted(
        rho, [](double) { return 0.0; }, [](double) { return 0.0; }, [](double) { return 0.0; });
    return cand;
}

double Reward::f(double s, double z) const { return std::exp(-rho * s) * running(z); }
double Reward::g(double s, double z) const { return std::exp(-rho * s) * terminal(z); }

Reward sell_reward(const SellParams& params) { return {params.rho, {0.0, 0.0}, {1.0, -params.a}}; }
Reward quit_reward(const QuitParams& params) { return {params.rho, {1.0, 0.0}, {0.0, 0.0}}; }

std::vector<double> conditional_mean_oracle(const ModelSpec& spec, double m0, const CommonNoisePath& common) {
    std::vector<double> out(common.increments.size() + 1);
    double b = 0.0;
    const double s1 = spec.sigma1();
    const double mu = spec.alpha0() - 0.5 * s1 * s1;
    for (std::size_t k = 0; k < out.size(); ++k) {
        if (k > 0) b += common.increments[k - 1];
        const double t = static_cast<double>(k) * common.dt;
        switch (spec.family()) {
            case ModelFamily::sell: out[k] = m0 * std::exp(mu * t + s1 * b); break;
            case ModelFamily::quit: out[k] = m0 + s1 * b; break;
        }
    }
    return out;
}

const char* to_string(StoppingRule::Kind kind) {
    switch (kind) {
        case StoppingRule::Kind::threshold_up: return "threshold_up";
        case StoppingRule::Kind::threshold_down: return "threshold_down";
        case StoppingRule::Kind::fixed_time: return "fixed_time";
        case StoppingRule::Kind::never: return "never";
    }
    return "?";
}

const char* to_string(SimMode mode) { return mode == SimMode::fast ? "fast" : "particle"; }

const char* to_string(Region region) { return region == Region::continuation ? "continuation" : "stopping"; }

namespace {

// Exact scalar dynamics of m_t given B1. The "driver" is a monotone
// increasing transform of m used for threshold tests without evaluating m:
// sell m = m0 exp(driver), quit m = m0 + driver.
class FastMeanPath {
public:
    FastMeanPath(const ModelSpec& spec, double m0, double dt, StreamId id)
        : family_(spec.family()), m0_(m0), dt_(dt), sqrt_dt_(std::sqrt(dt)), s1_(spec.sigma1()),
          mu_(spec.alpha0() - 0.5 * spec.sigma1() * spec.sigma1()), noise_(id.seed, id.replication) {
        if (family_ == ModelFamily::sell && !(m0 > 0.0)) {
            throw std::invalid_argument("fast mode for the sell model needs a positive initial mean");
        }
    }

    double driver() const {
        return family_ == ModelFamily::sell ? mu_ * (static_cast<double>(k_) * dt_) + s1_ * b_ : s1_ * b_;
    }
    double value() const { return family_ == ModelFamily::sell ? m0_ * std::exp(driver()) : m0_ + s1_ * b_; }
    double to_driver(double level) const {
        if (family_ == ModelFamily::quit) return level - m0_;
        return level > 0.0 ? std::log(level / m0_) : -std::numeric_limits<double>::infinity();
    }
    void advance() {
        b_ += sqrt_dt_ * noise_.normal(k_);
        ++k_;
    }
    std::size_t floor_events() const { return 0; }

private:
    ModelFamily family_;
    double m0_;
    double dt_;
    double sqrt_dt_;
    double s1_;
    double mu_;
    CommonNoiseSource noise_;
    std::uint64_t k_ = 0;
    double b_ = 0.0;
};

// Conditional mean read off the interacting particle cloud.
class ParticleMeanPath {
public:
    ParticleMeanPath(const ModelSpec& spec, const SimConfig& config, StreamId id)
        : spec_(&spec), id_(id), dt_(config.dt), sqrt_dt_(std::sqrt(config.dt)),
          noise_(id.seed, id.replication), cloud_(init_cloud(spec.initial_law(), config.n, id)) {
        options_.floor_epsilon = config.floor_epsilon;
        options_.exec = config.exec;
        m_ = conditional_mean(cloud_);
    }

    double driver() const { return m_; }
    double value() const { return m_; }
    double to_driver(double level) const { return level; }
    void advance() {
        floors_ += step(cloud_, *spec_, dt_, sqrt_dt_ * noise_.normal(k_), id_, options_).floor_events;
        ++k_;
        cloud_.time = static_cast<double>(k_) * dt_;
        m_ = conditional_mean(cloud_);
    }
    std::size_t floor_events() const { return floors_; }

private:
    const ModelSpec* spec_;
    StreamId id_;
    double dt_;
    double sqrt_dt_;
    CommonNoiseSource noise_;
    ParticleCloud cloud_;
    StepOptions options_;
    std::uint64_t k_ = 0;
    double m_ = 0.0;
    std::size_t floors_ = 0;
};

struct Condition {
    StoppingRule::Kind kind;
    double level = 0.0;           // in driver units
    std::uint64_t stop_step = 0;  // fixed_time
};

struct PathPayoffs {
    std::vector<double> payoff;
    std::vector<double> payoff_zero_cap;
    std::vector<char> capped;
    std::size_t floor_events = 0;
};

std::uint64_t steps_for(double t, double dt) {
    if (!(t >= 0.0)) throw std::invalid_argument("negative time");
    return static_cast<std::uint64_t>(std::llround(t / dt));
}

// Walks one path, stopping each condition at the first grid time it holds.
// Payoffs are at s = 0; the caller applies e^{-rho s}.
template <class Path>
void walk_path(Path& path, std::span<const Condition> conds, const Reward& reward, double dt, std::uint64_t cap_steps,
               PathPayoffs& out) {
    const std::size_t nc = conds.size();
    out.payoff.assign(nc, 0.0);
    out.payoff_zero_cap.assign(nc, 0.0);
    out.capped.assign(nc, 0);
    std::vector<char> done(nc, 0);
    std::size_t remaining = nc;
    const bool running = !reward.running.is_zero();
    const double step_discount = std::exp(-reward.rho * dt);
    double discount = 1.0;
    double accrued = 0.0;

    for (std::uint64_t k = 0;; ++k) {
        const double y = path.driver();
        for (std::size_t c = 0; c < nc; ++c) {
            if (done[c]) continue;
            bool hit = false;
            switch (conds[c].kind) {
                case StoppingRule::Kind::threshold_up: hit = y >= conds[c].level; break;
                case StoppingRule::Kind::threshold_down: hit = y <= conds[c].level; break;
                case StoppingRule::Kind::fixed_time: hit = k >= conds[c].stop_step; break;
                case StoppingRule::Kind::never: break;
            }
            const bool at_cap = k >= cap_steps;
            if (!hit && !at_cap) continue;
            const double t = static_cast<double>(k) * dt;
            out.payoff[c] = accrued + std::exp(-reward.rho * t) * reward.terminal(path.value());
            out.payoff_zero_cap[c] = hit ? out.payoff[c] : accrued;
            out.capped[c] = hit ? 0 : 1;
            done[c] = 1;
            --remaining;
        }
        if (remaining == 0) break;
        if (running) accrued += discount * reward.running(path.value()) * dt;
        discount *= step_discount;
        path.advance();
    }
    out.floor_events = path.floor_events();
}

std::vector<Condition> make_conditions(StoppingRule::Kind kind, std::span<const double> levels, double stop_time,
                                       double dt) {
    std::vector<Condition> conds;
    for (double level : levels) conds.push_back({kind, level, kind == StoppingRule::Kind::fixed_time ? steps_for(stop_time, dt) : 0});
    return conds;
}

double driver_level(const ModelSpec& spec, const SimConfig& config, double level) {
    if (config.mode == SimMode::particle) return level;
    FastMeanPath probe(spec, spec.initial_law().mean(), config.dt, {config.seed, 0});
    return probe.to_driver(level);
}

void check_config(const SimConfig& config, double horizon_cap) {
    if (!(config.dt > 0.0)) throw std::invalid_argument("simulation needs dt > 0");
    if (config.replications == 0) throw std::invalid_argument("simulation needs replications >= 1");
    if (!(horizon_cap > 0.0)) throw std::invalid_argument("stopping rule needs horizon_cap > 0");
    if (config.mode == SimMode::particle && config.n == 0) throw std::invalid_argument("particle mode needs n >= 1");
}

// Runs every replication for all conditions; per-condition estimates.
std::vector<McEstimate> run_conditions(const ModelSpec& spec, const std::vector<Condition>& conds, double horizon_cap,
                                       const Reward& reward, const SimConfig& config) {
    check_config(config, horizon_cap);
    const std::size_t reps = config.replications;
    const std::size_t nc = conds.size();
    const std::uint64_t cap_steps = steps_for(horizon_cap, config.dt);
    std::vector<double> payoff(nc * reps);
    std::vector<double> payoff_zero(nc * reps);
    std::vector<char> capped(nc * reps);
    std::vector<std::size_t> floors(reps, 0);
    const double m0 = spec.initial_law().mean();

    const auto nreps = static_cast<std::ptrdiff_t>(reps);
    const bool parallel = config.exec == Exec::parallel && !omp_in_parallel();
    std::exception_ptr failure;
#pragma omp parallel if (parallel)
    {
        PathPayoffs local;
#pragma omp for schedule(dynamic, 16)
        for (std::ptrdiff_t r = 0; r < nreps; ++r) {
            try {
                const StreamId id{config.seed, static_cast<std::uint32_t>(r)};
                if (config.mode == SimMode::fast) {
                    FastMeanPath path(spec, m0, config.dt, id);
                    walk_path(path, conds, reward, config.dt, cap_steps, local);
                } else {
                    ParticleMeanPath path(spec, config, id);
                    walk_path(path, conds, reward, config.dt, cap_steps, local);
                }
                for (std::size_t c = 0; c < nc; ++c) {
                    const std::size_t at = c * reps + static_cast<std::size_t>(r);
                    payoff[at] = local.payoff[c];
                    payoff_zero[at] = local.payoff_zero_cap[c];
                    capped[at] = local.capped[c];
                }
                floors[static_cast<std::size_t>(r)] = local.floor_events;
            } catch (...) {
#pragma omp critical(mvstop_mc_failure)
                if (!failure) failure = std::current_exception();
            }
        }
    }
    if (failure) std::rethrow_exception(failure);

    const double scale = std::exp(-reward.rho * config.s);
    std::size_t floor_total = 0;
    for (auto f : floors) floor_total += f;
    std::vector<McEstimate> out(nc);
    for (std::size_t c = 0; c < nc; ++c) {
        const std::span<const double> xs(payoff.data() + c * reps, reps);
        const std::span<const double> zs(payoff_zero.data() + c * reps, reps);
        const auto moments = sample_moments(xs);
        std::size_t ncap = 0;
        for (std::size_t r = 0; r < reps; ++r) ncap += capped[c * reps + r] ? 1 : 0;
        McEstimate& e = out[c];
        e.mean = scale * moments.mean;
        e.std_error = scale * moments.std_error;
        e.replications = reps;
        e.truncation_fraction = static_cast<double>(ncap) / static_cast<double>(reps);
        e.mean_zero_at_cap = scale * sample_moments(zs).mean;
        e.floor_events = floor_total;
    }
    return out;
}

}  // namespace

McEstimate evaluate_rule_mc(const ModelSpec& spec, const StoppingRule& rule, const Reward& reward,
                            const SimConfig& config) {
    check_config(config, rule.horizon_cap);
    double level = 0.0;
    if (rule.kind == StoppingRule::Kind::threshold_up || rule.kind == StoppingRule::Kind::threshold_down) {
        if (!std::isfinite(rule.threshold)) throw std::invalid_argument("threshold rule needs a finite threshold");
        level = driver_level(spec, config, rule.threshold);
    }
    const double levels[1] = {level};
    const auto conds = make_conditions(rule.kind, levels, rule.stop_time, config.dt);
    return run_conditions(spec, conds, rule.horizon_cap, reward, config).front();
}

SweepResult threshold_sweep(const ModelSpec& spec, StoppingRule::Kind kind, std::span<const double> thresholds,
                            double horizon_cap, const Reward& reward, const SimConfig& config) {
    if (kind != StoppingRule::Kind::threshold_up && kind != StoppingRule::Kind::threshold_down) {
        throw std::invalid_argument("threshold_sweep needs a threshold rule kind");
    }
    if (thresholds.empty()) throw std::invalid_argument("threshold_sweep needs at least one threshold");
    std::vector<double> levels;
    for (double th : thresholds) {
        if (!std::isfinite(th)) throw std::invalid_argument("threshold_sweep: non-finite threshold");
        levels.push_back(driver_level(spec, config, th));
    }
    const auto conds = make_conditions(kind, levels, 0.0, config.dt);
    const auto estimates = run_conditions(spec, conds, horizon_cap, reward, config);
    SweepResult result;
    result.kind = kind;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        result.rows.push_back({thresholds[i], estimates[i]});
        if (estimates[i].mean > estimates[result.argmax].mean) result.argmax = i;
    }
    return result;
}

std::size_t cells_from(const SweepResult& sweep, double target) {
    std::vector<double> sorted;
    for (const auto& row : sweep.rows) sorted.push_back(row.threshold);
    std::sort(sorted.begin(), sorted.end());
    const auto argmax_pos = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), sweep.argmax_threshold()) - sorted.begin());
    const auto upper = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), target) - sorted.begin());
    std::size_t lo = upper;
    std::size_t hi = upper;
    if (upper == sorted.size()) {
        lo = hi = sorted.size() - 1;
    } else if (sorted[upper] != target && upper > 0) {
        lo = upper - 1;
    }
    if (argmax_pos >= lo && argmax_pos <= hi) return 0;
    return argmax_pos < lo ? lo - argmax_pos : argmax_pos - hi;
}

void write_sweep_csv(std::ostream& out, const SweepResult& sweep, const CsvContext& ctx) {
    out << "model,threshold,mean,std_error,replications,truncation_fraction,dt,n,seed\n" << std::setprecision(17);
    for (const auto& row : sweep.rows) {
        const auto& e = row.estimate;
        out << ctx.model << ',' << row.threshold << ',' << e.mean << ',' << e.std_error << ',' << e.replications
            << ',' << e.truncation_fraction << ',' << ctx.dt << ',' << ctx.n << ',' << ctx.seed << '\n';
    }
    out << "# argmax," << sweep.argmax_threshold() << '\n';
}

namespace {

template <class Path>
double dynkin_path(Path& path, const ValueCandidate& phi, const Reward& reward, double s, double dt,
                   std::uint64_t steps, Region region, bool& exited) {
    auto inside = [&](double z) { return phi.in_continuation(z) == (region == Region::continuation); };
    const double z0 = path.value();
    const double start = phi.value(s, z0);
    const bool running = !reward.running.is_zero();
    double integral = 0.0;
    double f_prev = running ? reward.f(s, z0) : 0.0;
    double z = z0;
    exited = false;
    std::uint64_t k = 0;
    while (k < steps) {
        path.advance();
        ++k;
        z = path.value();
        const double t = s + static_cast<double>(k) * dt;
        if (running) {
            const double f_now = reward.f(t, z);
            integral += 0.5 * (f_prev + f_now) * dt;
            f_prev = f_now;
        }
        if (!inside(z)) {
            exited = true;
            break;
        }
    }
    return phi.value(s + static_cast<double>(k) * dt, z) - start + integral;
}

}  // namespace

DynkinEstimate dynkin_residual(const ModelSpec& spec, const ValueCandidate& phi, const Reward& reward,
                               const SimConfig& config, Region region, double horizon) {
    check_config(config, horizon);
    const std::size_t reps = config.replications;
    const std::uint64_t steps = steps_for(horizon, config.dt);
    std::vector<double> residual(reps);
    std::vector<char> exited(reps, 0);
    const double m0 = spec.initial_law().mean();
    const auto nreps = static_cast<std::ptrdiff_t>(reps);
    const bool parallel = config.exec == Exec::parallel && !omp_in_parallel();
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 64) if (parallel)
    for (std::ptrdiff_t r = 0; r < nreps; ++r) {
        try {
            const StreamId id{config.seed, static_cast<std::uint32_t>(r)};
            bool left = false;
            if (config.mode == SimMode::fast) {
                FastMeanPath path(spec, m0, config.dt, id);
                residual[static_cast<std::size_t>(r)] =
                    dynkin_path(path, phi, reward, config.s, config.dt, steps, region, left);
            } else {
                ParticleMeanPath path(spec, config, id);
                residual[static_cast<std::size_t>(r)] =
                    dynkin_path(path, phi, reward, config.s, config.dt, steps, region, left);
            }
            exited[static_cast<std::size_t>(r)] = left ? 1 : 0;
        } catch (...) {
#pragma omp critical(mvstop_dynkin_failure)
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);

    const auto m = sample_moments(residual);
    DynkinEstimate e;
    e.residual = m.mean;
    e.std_error = m.std_error;
    e.rate = m.mean / horizon;
    e.rate_std_error = m.std_error / horizon;
    std::size_t nexit = 0;
    for (char x : exited) nexit += x ? 1 : 0;
    e.exit_fraction = static_cast<double>(nexit) / static_cast<double>(reps);
    e.replications = reps;
    return e;
}

}  // namespace mvstop
