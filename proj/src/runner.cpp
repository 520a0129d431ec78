#include "mvstop/runner.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "mvstop/error.hpp"
#include "mvstop/fokker_planck.hpp"
#include "mvstop/particle.hpp"

#ifndef MVSTOP_VERSION
#define MVSTOP_VERSION "0.0.0"
#endif

namespace mvstop {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

class RunContext {
public:
    RunContext(const ExperimentConfig& config, fs::path dir, std::string hash)
        : config_(config), dir_(std::move(dir)), hash_(std::move(hash)) {}

    const ExperimentConfig& config() const { return config_; }
    const std::string& hash() const { return hash_; }

    std::ofstream open_csv(const std::string& name) {
        std::ofstream out = open(name);
        out << "# manifest," << hash_ << '\n' << "# experiment," << to_string(config_.kind) << '\n';
        out << std::setprecision(17);
        return out;
    }

    void write_json(const std::string& name, json doc) {
        doc["manifest_hash"] = hash_;
        std::ofstream out = open(name);
        out << doc.dump(2) << '\n';
    }

    void check(const std::string& name, double value, double limit, bool passed) {
        assertions_.push_back({name, value, limit, passed});
    }
    void check_at_most(const std::string& name, double value, double limit) {
        check(name, value, limit, value <= limit);
    }

    std::vector<Assertion>& assertions() { return assertions_; }
    std::vector<std::string>& files() { return files_; }

private:
    std::ofstream open(const std::string& name) {
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
        files_.push_back(name);
        return out;
    }

    const ExperimentConfig& config_;
    fs::path dir_;
    std::string hash_;
    std::vector<Assertion> assertions_;
    std::vector<std::string> files_;
};

double root_residual(const SellParams& p, double l) {
    const double s2 = p.sigma1 * p.sigma1;
    const double scale = std::fabs(p.alpha0 * l) + std::fabs(0.5 * s2 * l * (l - 1.0)) + p.rho;
    return std::fabs(p.alpha0 * l + 0.5 * s2 * l * (l - 1.0) - p.rho) / scale;
}

void run_closed_form(RunContext& ctx) {
    const auto& c = ctx.config();
    const auto& tol = c.numerics.tolerances;
    const double z0 = c.model.initial.mean();
    const double s = c.numerics.s;
    const auto cand = c.model.candidate();
    const double b = cand.boundary;
    const double continuity = std::fabs(cand.continuation.F(b) - cand.stopping.F(b));
    const double fit = std::fabs(cand.continuation.dF(b) - cand.stopping.dF(b));
    json doc;
    doc["model"] = to_string(c.model.family);
    if (c.model.family == ModelFamily::sell) {
        const auto& p = c.model.sell;
        const auto roots = lambda_roots(p.alpha0, p.sigma1, p.rho);
        doc["lambda1"] = roots.lambda1;
        doc["lambda2"] = roots.lambda2;
        doc["xi_star"] = b;
        doc["root_residual_lambda1"] = root_residual(p, roots.lambda1);
        doc["root_residual_lambda2"] = root_residual(p, roots.lambda2);
        doc["value_at_initial_mean"] = z0 > 0.0 ? json(sell_value(s, z0, p)) : json(nullptr);
        ctx.check_at_most("root_residual_lambda1", root_residual(p, roots.lambda1), tol.root_residual);
        ctx.check_at_most("root_residual_lambda2", root_residual(p, roots.lambda2), tol.root_residual);
        ctx.check("lambda_ordering", roots.lambda2, roots.lambda1, roots.lambda2 < 0.0 && roots.lambda1 > 1.0);
    } else {
        const auto& p = c.model.quit;
        const auto q = quit_threshold(p);
        const double e = std::exp(-q.lambda * q.eta_star);
        const double r15 = std::fabs(q.eta_star / p.rho + q.c1 * e);
        const double r16 = std::fabs(1.0 / p.rho - q.lambda * q.c1 * e);
        doc["lambda"] = q.lambda;
        doc["eta_star"] = q.eta_star;
        doc["c1"] = q.c1;
        doc["continuity_residual"] = r15;
        doc["smooth_fit_residual"] = r16;
        doc["value_at_initial_mean"] = quit_value(s, z0, p);
        ctx.check_at_most("continuity_residual", r15, tol.root_residual);
        ctx.check_at_most("smooth_fit_residual", r16, tol.root_residual);
    }
    doc["continuity_gap"] = continuity;
    doc["smooth_fit_gap"] = fit;
    ctx.check_at_most("continuity_gap", continuity, tol.fit);
    ctx.check_at_most("smooth_fit_gap", fit, tol.fit);
    ctx.write_json("closed_form.json", std::move(doc));
}

std::uint64_t step_count(double horizon, double dt) { return static_cast<std::uint64_t>(std::llround(horizon / dt)); }

void run_simulate_path(RunContext& ctx) {
    const auto& c = ctx.config();
    const auto& num = c.numerics;
    const auto spec = c.model.spec();
    const std::size_t steps = step_count(num.horizon, num.dt);
    const double m0 = spec.initial_law().mean();
    const bool relative = c.model.family == ModelFamily::sell;
    PathOptions options;
    options.step.floor_epsilon = num.floor_epsilon;

    std::vector<std::size_t> rows;
    if (num.checkpoints.empty()) {
        for (std::size_t k = 0; k <= steps; ++k) rows.push_back(k);
    } else {
        for (double t : num.checkpoints) rows.push_back(std::min<std::size_t>(step_count(t, num.dt), steps));
    }

    auto out = ctx.open_csv("trajectory.csv");
    out << "replication,t,m_bar,oracle,error,floor_events\n";
    double worst = 0.0;
    std::size_t floors = 0;
    for (std::size_t r = 0; r < num.replications; ++r) {
        const auto rep = static_cast<std::uint32_t>(r);
        const auto common = CommonNoisePath::generate(c.seed, rep, num.dt, steps);
        const auto traj = simulate_path(spec, num.n, common, {c.seed, rep}, options);
        const auto oracle = conditional_mean_oracle(spec, m0, common);
        for (std::size_t k : rows) {
            const auto& p = traj.points[k];
            const double scale = relative ? std::fabs(oracle[k]) : std::max(1.0, std::fabs(oracle[k]));
            const double err = std::fabs(p.m_bar - oracle[k]) / scale;
            out << r << ',' << p.t << ',' << p.m_bar << ',' << oracle[k] << ',' << err << ',' << p.floor_events << '\n';
        }
        const double scale = relative ? std::fabs(oracle.back()) : std::max(1.0, std::fabs(oracle.back()));
        worst = std::max(worst, std::fabs(traj.points.back().m_bar - oracle.back()) / scale);
        floors += traj.points.back().floor_events;
    }
    ctx.check_at_most("oracle_error_at_horizon", worst, num.tolerances.oracle_error);
    ctx.write_json("trajectory_summary.json",
                   {{"max_oracle_error_at_horizon", worst}, {"floor_events", floors}, {"paths", num.replications}});
}

void run_fokker_planck(RunContext& ctx) {
    const auto& c = ctx.config();
    const auto& num = c.numerics;
    const auto spec = c.model.spec();
    const std::size_t steps = step_count(num.horizon, num.dt);
    const auto& law = c.model.initial;
    const double mean = law.mean();
    const double sd = law.sd();
    auto density = density_from_pdf(num.grid, [&](double x) {
        const double u = (x - mean) / sd;
        return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * std::numbers::pi));
    });
    const auto common = CommonNoisePath::generate(c.seed, 0, num.dt, steps);
    double max_defect = 0.0;
    double clipped = 0.0;
    for (std::size_t k = 0; k < steps; ++k) {
        const auto rep = step_spide(density, spec, num.dt, common.increments[k]);
        max_defect = std::max(max_defect, rep.mass_defect);
        clipped += rep.clipped_mass;
    }

    PathOptions options;
    options.snapshot_times = {common.horizon()};
    options.step.floor_epsilon = num.floor_epsilon;
    const auto traj = simulate_path(spec, num.n, common, {c.seed, 0}, options);
    const auto& cloud = traj.snapshots.back();
    const double h = num.bandwidth ? *num.bandwidth : silverman_bandwidth(cloud.states);
    const auto kde = kde_density(cloud, h, num.grid);
    const double l1 = compare_to_particles(density, kde);

    auto out = ctx.open_csv("density.csv");
    out << "x,spide,kde\n";
    for (std::size_t i = 0; i < density.values.size(); ++i) {
        out << num.grid.node(i) << ',' << density.values[i] << ',' << kde.values[i] << '\n';
    }
    ctx.check_at_most("l1_distance", l1, num.tolerances.l1);
    ctx.check_at_most("max_mass_defect", max_defect, num.tolerances.mass_defect);
    ctx.write_json("fokker_planck.json", {{"l1_distance", l1},
                                          {"max_mass_defect", max_defect},
                                          {"clipped_mass_total", clipped},
                                          {"bandwidth", h},
                                          {"steps", steps},
                                          {"time", density.time}});
}

void run_var_ineq(RunContext& ctx) {
    const auto& c = ctx.config();
    const auto& num = c.numerics;
    const auto spec = c.model.spec();
    const auto reward = c.model.reward();
    std::optional<double> threshold;
    if (num.threshold_offset != 0.0) threshold = c.model.optimal_threshold() + num.threshold_offset;
    const ScalarField g = [&](double s, double z) { return reward.g(s, z); };
    const ScalarField f = [&](double s, double z) { return reward.f(s, z); };
    const VarIneqTolerances tol{num.tolerances.residual, num.tolerances.obstacle, num.tolerances.fit};
    const auto report = check_variational_inequalities(c.model.candidate(threshold), g, f, spec, num.probe, tol);
    ctx.write_json("var_ineq.json", to_json(report));
    auto out = ctx.open_csv("probes.csv");
    write_probe_csv(out, report);
    ctx.check("flagged_as_expected", report.flagged() ? 1.0 : 0.0, num.expect_flagged ? 1.0 : 0.0,
              report.flagged() == num.expect_flagged);
}

StoppingRule make_rule(const ExperimentConfig& c) {
    const auto& r = c.numerics.rule;
    return {r.kind, r.threshold.value_or(c.model.optimal_threshold()), r.stop_time, c.numerics.t_max};
}

StoppingRule::Kind optimal_kind(ModelFamily family) {
    return family == ModelFamily::sell ? StoppingRule::Kind::threshold_up : StoppingRule::Kind::threshold_down;
}

void run_evaluate_rule(RunContext& ctx) {
    const auto& c = ctx.config();
    const auto& tol = c.numerics.tolerances;
    const auto spec = c.model.spec();
    const auto rule = make_rule(c);
    const auto sim = c.sim_config();
    const auto est = evaluate_rule_mc(spec, rule, c.model.reward(), sim);
    const double phi = c.model.value(c.numerics.s, spec.initial_law().mean());

    auto out = ctx.open_csv("estimate.csv");
    out << "model,rule,threshold,stop_time,mean,std_error,replications,truncation_fraction,mean_zero_at_cap,"
           "floor_events,closed_form,dt,n,seed\n";
    out << to_string(c.model.family) << ',' << to_string(rule.kind) << ',' << rule.threshold << ',' << rule.stop_time
        << ',' << est.mean << ',' << est.std_error << ',' << est.replications << ',' << est.truncation_fraction << ','
        << est.mean_zero_at_cap << ',' << est.floor_events << ',' << phi << ',' << sim.dt << ','
        << (sim.mode == SimMode::particle ? sim.n : 0) << ',' << sim.seed << '\n';

    ctx.check_at_most("dominance_excess", est.mean - phi, tol.se_multiple * est.std_error);
    if (rule.kind == optimal_kind(c.model.family) && !c.numerics.rule.threshold) {
        const double band = std::max(tol.se_multiple * est.std_error, tol.rel_band * std::fabs(phi));
        ctx.check_at_most("closed_form_gap", std::fabs(est.mean - phi), band);
    }
}

void run_sweep(RunContext& ctx) {
    const auto& c = ctx.config();
    const auto& tol = c.numerics.tolerances;
    const auto spec = c.model.spec();
    const auto sim = c.sim_config();
    const auto sweep =
        threshold_sweep(spec, c.numerics.rule.kind, c.numerics.thresholds, c.numerics.t_max, c.model.reward(), sim);
    auto out = ctx.open_csv("sweep.csv");
    write_sweep_csv(out, sweep,
                    {to_string(c.model.family), sim.mode == SimMode::particle ? sim.n : 0, sim.dt, sim.seed});

    const double phi = c.model.value(c.numerics.s, spec.initial_law().mean());
    double excess = -std::numeric_limits<double>::infinity();
    bool dominated = true;
    for (const auto& row : sweep.rows) {
        excess = std::max(excess, row.estimate.mean - phi);
        dominated = dominated && row.estimate.mean <= phi + tol.se_multiple * row.estimate.std_error;
    }
    ctx.check("dominance_excess", excess, 0.0, dominated);
    if (c.numerics.rule.kind == optimal_kind(c.model.family)) {
        const auto cells = cells_from(sweep, c.model.optimal_threshold());
        ctx.check_at_most("argmax_cells_from_optimum", static_cast<double>(cells), static_cast<double>(tol.cells));
    }
}

void run_dynkin(RunContext& ctx) {
    const auto& c = ctx.config();
    const auto& num = c.numerics;
    const auto spec = c.model.spec();
    const auto est = dynkin_residual(spec, c.model.candidate(), c.model.reward(), c.sim_config(), num.region,
                                     num.horizon);
    ctx.write_json("dynkin.json", {{"region", to_string(num.region)},
                                   {"horizon", num.horizon},
                                   {"residual", est.residual},
                                   {"std_error", est.std_error},
                                   {"rate", est.rate},
                                   {"rate_std_error", est.rate_std_error},
                                   {"exit_fraction", est.exit_fraction},
                                   {"replications", est.replications}});
    const double band = num.tolerances.se_multiple * est.std_error;
    if (num.region == Region::continuation) {
        ctx.check_at_most("abs_residual", std::fabs(est.residual), band);
    } else {
        ctx.check_at_most("residual", est.residual, band);
    }
}

void dispatch(RunContext& ctx) {
    switch (ctx.config().kind) {
        case ExperimentKind::simulate_path: run_simulate_path(ctx); break;
        case ExperimentKind::fokker_planck_compare: run_fokker_planck(ctx); break;
        case ExperimentKind::var_ineq_check: run_var_ineq(ctx); break;
        case ExperimentKind::evaluate_rule: run_evaluate_rule(ctx); break;
        case ExperimentKind::threshold_sweep: run_sweep(ctx); break;
        case ExperimentKind::dynkin_check: run_dynkin(ctx); break;
        case ExperimentKind::closed_form_report: run_closed_form(ctx); break;
    }
}

std::string number_text(const json& v) {
    if (!v.is_number()) return "n/a";
    std::ostringstream out;
    out << v.get<double>();
    return out.str();
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace

const char* artifact_version() { return MVSTOP_VERSION; }

std::string manifest_hash(const ExperimentConfig& config) {
    return fnv1a_hex(std::string("mvstop ") + artifact_version() + "\n" + normalize(config).dump());
}

std::optional<int> workers_from_env() {
    const char* raw = std::getenv("MVSTOP_WORKERS");
    if (raw == nullptr || *raw == '\0') return std::nullopt;
    char* end = nullptr;
    const long v = std::strtol(raw, &end, 10);
    if (*end != '\0' || v < 1 || v > 4096) throw std::invalid_argument("MVSTOP_WORKERS must be a positive integer");
    return static_cast<int>(v);
}

RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    if (options.workers) omp_set_num_threads(*options.workers);

    RunOutcome outcome;
    outcome.directory = options.output.value_or(fs::path(config.output));
    outcome.manifest_hash = manifest_hash(config);
    fs::create_directories(outcome.directory);
    RunContext ctx(config, outcome.directory, outcome.manifest_hash);

    json error = nullptr;
    try {
        dispatch(ctx);
    } catch (const NumericalAbort& e) {
        error = {{"kind", "numerical_abort"}, {"what", e.what()}, {"time", e.time()}, {"index", e.index()}};
    } catch (const std::exception& e) {
        error = {{"kind", "error"}, {"what", e.what()}};
    }

    bool passed = error.is_null() && !ctx.assertions().empty();
    json assertions = json::array();
    for (const auto& a : ctx.assertions()) {
        passed = passed && a.passed;
        assertions.push_back({{"name", a.name}, {"value", a.value}, {"limit", a.limit}, {"passed", a.passed}});
    }
    ctx.write_json("summary.json", {{"experiment", to_string(config.kind)},
                                    {"passed", passed},
                                    {"assertions", assertions},
                                    {"error", error}});

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ctx.write_json("manifest.json", {{"artifact", "mvstop"},
                                     {"version", artifact_version()},
                                     {"experiment", to_string(config.kind)},
                                     {"seed", config.seed},
                                     {"config", normalize(config)},
                                     {"wall_time_seconds", wall}});

    outcome.passed = passed;
    outcome.assertions = ctx.assertions();
    if (!error.is_null()) outcome.error = error.at("what").get<std::string>();
    outcome.files = ctx.files();
    return outcome;
}

std::string report(const fs::path& directory, bool* passed) {
    const json summary = read_json(directory / "summary.json");
    const json manifest = read_json(directory / "manifest.json");
    std::ostringstream out;
    const bool ok = summary.at("passed").get<bool>();
    out << "experiment: " << summary.at("experiment").get<std::string>() << '\n';
    out << "version:    " << manifest.at("version").get<std::string>() << '\n';
    out << "seed:       " << manifest.at("seed").get<std::uint64_t>() << '\n';
    out << "manifest:   " << summary.at("manifest_hash").get<std::string>() << '\n';
    out << "wall time:  " << number_text(manifest.at("wall_time_seconds")) << " s\n";
    out << "result:     " << (ok ? "PASS" : "FAIL") << '\n';
    for (const auto& a : summary.at("assertions")) {
        out << "  [" << (a.at("passed").get<bool>() ? "PASS" : "FAIL") << "] " << a.at("name").get<std::string>()
            << " = " << number_text(a.at("value")) << " (limit " << number_text(a.at("limit")) << ")\n";
    }
    if (!summary.at("error").is_null()) out << "  error: " << summary.at("error").at("what").get<std::string>() << '\n';
    if (passed != nullptr) *passed = ok;
    return out.str();
}

}  // namespace mvstop
