#include "mvstop/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace mvstop {

using nlohmann::json;

namespace {

constexpr ExperimentKind kAllKinds[] = {
    ExperimentKind::simulate_path,   ExperimentKind::fokker_planck_compare, ExperimentKind::var_ineq_check,
    ExperimentKind::evaluate_rule,   ExperimentKind::threshold_sweep,       ExperimentKind::dynkin_check,
    ExperimentKind::closed_form_report,
};

constexpr StoppingRule::Kind kAllRules[] = {
    StoppingRule::Kind::threshold_up,
    StoppingRule::Kind::threshold_down,
    StoppingRule::Kind::fixed_time,
    StoppingRule::Kind::never,
};

// Walks one JSON object, recording which keys were consumed so that the rest
// can be reported as unknown.
class Reader {
public:
    Reader(const json* node, std::string path, std::vector<std::string>& errors)
        : node_(node), path_(std::move(path)), errors_(&errors) {
        if (node_ != nullptr && !node_->is_object()) {
            error("", "expected an object");
            node_ = nullptr;
        }
    }

    ~Reader() {
        if (node_ == nullptr) return;
        for (const auto& [key, value] : node_->items()) {
            if (!seen_.contains(key)) errors_->push_back("unknown key \"" + qualified(key) + "\"");
        }
    }

    Reader(const Reader&) = delete;
    Reader& operator=(const Reader&) = delete;

    const json* find(const std::string& key) {
        seen_.insert(key);
        if (node_ == nullptr) return nullptr;
        const auto it = node_->find(key);
        return it == node_->end() ? nullptr : &*it;
    }

    bool has(const std::string& key) {
        return find(key) != nullptr;
    }

    std::optional<double> opt_number(const std::string& key) {
        const json* v = find(key);
        if (v == nullptr || v->is_null()) return std::nullopt;
        if (!v->is_number()) {
            error(key, "expected a number");
            return std::nullopt;
        }
        const double x = v->get<double>();
        if (!std::isfinite(x)) {
            error(key, "expected a finite number");
            return std::nullopt;
        }
        return x;
    }

    double number(const std::string& key, double fallback) { return opt_number(key).value_or(fallback); }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
        const json* v = find(key);
        if (v == nullptr) return fallback;
        if (v->is_number_unsigned()) return v->get<std::uint64_t>();
        if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v->get<std::int64_t>());
        if (v->is_number_float()) {
            const double x = v->get<double>();
            if (x >= 0.0 && x < 0x1.0p64 && std::floor(x) == x) return static_cast<std::uint64_t>(x);
        }
        error(key, "expected a non-negative integer");
        return fallback;
    }

    std::string string(const std::string& key, const std::string& fallback) {
        const json* v = find(key);
        if (v == nullptr) return fallback;
        if (!v->is_string()) {
            error(key, "expected a string");
            return fallback;
        }
        return v->get<std::string>();
    }

    bool boolean(const std::string& key, bool fallback) {
        const json* v = find(key);
        if (v == nullptr) return fallback;
        if (!v->is_boolean()) {
            error(key, "expected true or false");
            return fallback;
        }
        return v->get<bool>();
    }

    std::vector<double> numbers(const std::string& key) {
        std::vector<double> out;
        const json* v = find(key);
        if (v == nullptr) return out;
        if (!v->is_array()) {
            error(key, "expected an array of numbers");
            return out;
        }
        for (const auto& x : *v) {
            if (!x.is_number() || !std::isfinite(x.get<double>())) {
                error(key, "expected an array of finite numbers");
                return {};
            }
            out.push_back(x.get<double>());
        }
        return out;
    }

    template <class Enum, std::size_t N>
    Enum choice(const std::string& key, const Enum (&options)[N], Enum fallback) {
        const json* v = find(key);
        if (v == nullptr) return fallback;
        if (v->is_string()) {
            for (Enum e : options) {
                if (v->get<std::string>() == to_string(e)) return e;
            }
        }
        std::string allowed;
        for (Enum e : options) allowed += std::string(allowed.empty() ? "" : ", ") + to_string(e);
        error(key, "expected one of: " + allowed);
        return fallback;
    }

    Reader child(const std::string& key) { return Reader(find(key), qualified(key), *errors_); }

    void error(const std::string& key, const std::string& message) {
        errors_->push_back((key.empty() ? path_ : qualified(key)) + ": " + message);
    }

    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    const json* node_;
    std::string path_;
    std::vector<std::string>* errors_;
    std::set<std::string> seen_;
};

const ModelFamily kFamilies[] = {ModelFamily::sell, ModelFamily::quit};
const SimMode kModes[] = {SimMode::fast, SimMode::particle};
const Region kRegions[] = {Region::continuation, Region::stopping};

MarkDistribution read_marks(Reader& r) {
    const std::string kind = r.string("kind", "constant");
    if (kind == "constant") {
        return MarkDistribution::constant(r.number("value", 0.0));
    }
    if (kind == "uniform") {
        const double lo = r.number("lo", 0.0);
        const double hi = r.number("hi", 0.0);
        if (!(lo < hi)) {
            r.error("hi", "violates \"lo < hi\"");
            return MarkDistribution::constant(0.0);
        }
        return MarkDistribution::uniform(lo, hi);
    }
    r.error("kind", "expected one of: constant, uniform");
    return MarkDistribution::constant(0.0);
}

InitialLaw read_initial(Reader& r, double default_x) {
    const std::string kind = r.string("kind", "dirac");
    if (kind == "dirac") return InitialLaw::dirac(r.number("x", default_x));
    if (kind == "normal") {
        const double mean = r.number("mean", default_x);
        const double sd = r.number("sd", 1.0);
        if (!(sd > 0.0)) {
            r.error("sd", "violates \"sd > 0\"");
            return InitialLaw::dirac(mean);
        }
        return InitialLaw::normal(mean, sd);
    }
    r.error("kind", "expected one of: dirac, normal");
    return InitialLaw::dirac(default_x);
}

void read_model(Reader& r, ModelConfig& m) {
    if (!r.has("family")) r.error("family", "required");
    m.family = r.choice("family", kFamilies, ModelFamily::sell);
    if (m.family == ModelFamily::sell) {
        SellParams& p = m.sell;
        p.alpha0 = r.number("alpha0", p.alpha0);
        p.sigma1 = r.number("sigma1", p.sigma1);
        p.sigma2 = r.number("sigma2", p.sigma2);
        p.rho = r.number("rho", p.rho);
        p.a = r.number("a", p.a);
        {
            Reader jr = r.child("jumps");
            p.levy.intensity = jr.number("intensity", 0.0);
            Reader mr = jr.child("marks");
            p.levy.marks = read_marks(mr);
            if (!(p.levy.intensity >= 0.0)) jr.error("intensity", "violates \"intensity >= 0\"");
            if (!(p.levy.marks.lo() > -1.0 && p.levy.marks.hi() <= 0.0)) {
                jr.error("marks", "violates \"gamma0 in (-1, 0]\"");
            }
        }
        if (!(p.sigma1 > 0.0)) r.error("sigma1", "violates \"sigma1 > 0\"");
        if (!(p.sigma2 >= 0.0)) r.error("sigma2", "violates \"sigma2 >= 0\"");
        if (!(p.rho > 0.0)) r.error("rho", "violates \"rho > 0\"");
        if (!(p.a > 0.0)) r.error("a", "violates \"a > 0\"");
        if (!(p.alpha0 < p.rho)) r.error("alpha0", "violates \"alpha0 < rho\"");
        Reader ir = r.child("initial");
        m.initial = read_initial(ir, 1.0);
    } else {
        QuitParams& p = m.quit;
        p.sigma1 = r.number("sigma1", p.sigma1);
        p.sigma2 = r.number("sigma2", p.sigma2);
        p.gamma0 = r.number("gamma0", p.gamma0);
        p.intensity = r.number("intensity", p.intensity);
        p.rho = r.number("rho", p.rho);
        if (p.sigma1 == 0.0) r.error("sigma1", "violates \"sigma1 \xE2\x89\xA0 0\"");
        if (!(p.rho > 0.0)) r.error("rho", "violates \"rho > 0\"");
        if (!(p.intensity >= 0.0)) r.error("intensity", "violates \"intensity >= 0\"");
        Reader ir = r.child("initial");
        m.initial = read_initial(ir, 0.0);
    }
}

void read_tolerances(Reader& r, Tolerances& t) {
    t.se_multiple = r.number("se_multiple", t.se_multiple);
    t.rel_band = r.number("rel_band", t.rel_band);
    t.cells = static_cast<std::size_t>(r.unsigned_integer("cells", t.cells));
    t.residual = r.number("residual", t.residual);
    t.obstacle = r.number("obstacle", t.obstacle);
    t.fit = r.number("fit", t.fit);
    t.root_residual = r.number("root_residual", t.root_residual);
    t.l1 = r.number("l1", t.l1);
    t.mass_defect = r.number("mass_defect", t.mass_defect);
    t.oracle_error = r.number("oracle_error", t.oracle_error);
    for (const char* key : {"se_multiple", "rel_band", "residual", "obstacle", "fit", "root_residual", "l1",
                            "mass_defect", "oracle_error"}) {
        const json* v = r.find(key);
        if (v != nullptr && v->is_number() && !(v->get<double>() >= 0.0)) r.error(key, "violates \">= 0\"");
    }
}

void read_numerics(Reader& r, const ModelConfig& model, NumericsConfig& n) {
    n.n = static_cast<std::size_t>(r.unsigned_integer("n", n.n));
    n.dt = r.number("dt", n.dt);
    n.horizon = r.number("horizon", n.horizon);
    n.replications = static_cast<std::size_t>(r.unsigned_integer("replications", n.replications));
    n.t_max = r.number("t_max", 20.0 / model.rho());
    n.mode = r.choice("mode", kModes, n.mode);
    {
        Reader g = r.child("grid");
        n.grid.x_min = g.number("x_min", n.grid.x_min);
        n.grid.x_max = g.number("x_max", n.grid.x_max);
        n.grid.cells = static_cast<std::size_t>(g.unsigned_integer("cells", n.grid.cells));
        if (!(n.grid.x_max > n.grid.x_min)) g.error("x_max", "violates \"x_min < x_max\"");
        if (n.grid.cells < 2) g.error("cells", "violates \"cells >= 2\"");
    }
    n.bandwidth = r.opt_number("bandwidth");
    n.thresholds = r.numbers("thresholds");
    {
        Reader rr = r.child("rule");
        n.rule.kind = rr.choice("kind", kAllRules,
                                model.family == ModelFamily::sell ? StoppingRule::Kind::threshold_up
                                                                  : StoppingRule::Kind::threshold_down);
        const json* th = rr.find("threshold");
        if (th != nullptr && !(th->is_string() && th->get<std::string>() == "optimal")) {
            n.rule.threshold = rr.opt_number("threshold");
            if (!n.rule.threshold) rr.error("threshold", "expected a number or \"optimal\"");
        }
        n.rule.stop_time = rr.number("stop_time", 0.0);
        if (!(n.rule.stop_time >= 0.0)) rr.error("stop_time", "violates \"stop_time >= 0\"");
    }
    n.floor_epsilon = r.opt_number("floor_epsilon");
    n.s = r.number("s", n.s);
    n.checkpoints = r.numbers("checkpoints");
    {
        Reader p = r.child("probe");
        ProbeGrid& g = n.probe;
        if (model.family == ModelFamily::quit) {
            g.z_min = -3.0;
            g.z_max = 5.0;
            g.log_spaced = false;
        }
        g.z_min = p.number("z_min", g.z_min);
        g.z_max = p.number("z_max", g.z_max);
        g.z_count = static_cast<std::size_t>(p.unsigned_integer("z_count", g.z_count));
        g.log_spaced = p.boolean("log_spaced", g.log_spaced);
        g.s_min = p.number("s_min", g.s_min);
        g.s_max = p.number("s_max", g.s_max);
        g.s_count = static_cast<std::size_t>(p.unsigned_integer("s_count", g.s_count));
        if (!(g.z_max > g.z_min)) p.error("z_max", "violates \"z_min < z_max\"");
        if (g.z_count < 2) p.error("z_count", "violates \"z_count >= 2\"");
        if (g.log_spaced && !(g.z_min > 0.0)) p.error("z_min", "violates \"z_min > 0 for log spacing\"");
        if (!(g.s_max >= g.s_min)) p.error("s_max", "violates \"s_min <= s_max\"");
        if (g.s_count < 1) p.error("s_count", "violates \"s_count >= 1\"");
    }
    n.threshold_offset = r.number("threshold_offset", n.threshold_offset);
    n.expect_flagged = r.boolean("expect_flagged", n.expect_flagged);
    n.region = r.choice("region", kRegions, n.region);
    {
        Reader t = r.child("tolerances");
        read_tolerances(t, n.tolerances);
    }

    if (n.n < 1) r.error("n", "violates \"n >= 1\"");
    if (!(n.dt > 0.0)) r.error("dt", "violates \"dt > 0\"");
    if (!(n.horizon >= 0.0)) r.error("horizon", "violates \"horizon >= 0\"");
    if (n.replications < 1) r.error("replications", "violates \"replications >= 1\"");
    if (n.replications > std::numeric_limits<std::uint32_t>::max()) {
        r.error("replications", "violates \"replications <= 2^32 - 1\"");
    }
    if (!(n.t_max > 0.0)) r.error("t_max", "violates \"t_max > 0\"");
    if (n.bandwidth && !(*n.bandwidth > 0.0)) r.error("bandwidth", "violates \"bandwidth > 0\"");
    if (n.floor_epsilon && !(*n.floor_epsilon > 0.0)) r.error("floor_epsilon", "violates \"floor_epsilon > 0\"");
    for (double t : n.checkpoints) {
        if (!(t >= 0.0 && t <= n.horizon)) {
            r.error("checkpoints", "violates \"0 <= checkpoint <= horizon\"");
            break;
        }
    }
}

void check_experiment(Reader& root, const ExperimentConfig& c) {
    const auto& n = c.numerics;
    const bool sell = c.model.family == ModelFamily::sell;
    const bool mc = c.kind == ExperimentKind::evaluate_rule || c.kind == ExperimentKind::threshold_sweep ||
                    c.kind == ExperimentKind::dynkin_check;
    if (mc && sell && n.mode == SimMode::fast && !(c.model.initial.mean() > 0.0)) {
        root.error("model.initial", "violates \"initial mean > 0\" (fast mode, sell model)");
    }
    if (c.kind == ExperimentKind::threshold_sweep) {
        if (n.thresholds.empty()) root.error("numerics.thresholds", "required for threshold_sweep");
        if (n.rule.kind != StoppingRule::Kind::threshold_up && n.rule.kind != StoppingRule::Kind::threshold_down) {
            root.error("numerics.rule.kind", "threshold_sweep needs threshold_up or threshold_down");
        }
    }
    if (c.kind == ExperimentKind::fokker_planck_compare && c.model.initial.kind() != InitialLaw::Kind::normal) {
        root.error("model.initial", "fokker_planck_compare needs a normal initial law");
    }
    if (c.kind == ExperimentKind::simulate_path || c.kind == ExperimentKind::fokker_planck_compare ||
        c.kind == ExperimentKind::dynkin_check) {
        if (!(n.horizon > 0.0)) root.error("numerics.horizon", "violates \"horizon > 0\"");
    }
}

}  // namespace

const char* to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::simulate_path: return "simulate_path";
        case ExperimentKind::fokker_planck_compare: return "fokker_planck_compare";
        case ExperimentKind::var_ineq_check: return "var_ineq_check";
        case ExperimentKind::evaluate_rule: return "evaluate_rule";
        case ExperimentKind::threshold_sweep: return "threshold_sweep";
        case ExperimentKind::dynkin_check: return "dynkin_check";
        case ExperimentKind::closed_form_report: return "closed_form_report";
    }
    return "?";
}

ModelSpec ModelConfig::spec() const {
    return family == ModelFamily::sell ? make_model(sell, initial) : make_model(quit, initial);
}

Reward ModelConfig::reward() const { return family == ModelFamily::sell ? sell_reward(sell) : quit_reward(quit); }

ValueCandidate ModelConfig::candidate(std::optional<double> threshold) const {
    return family == ModelFamily::sell ? sell_candidate(sell, threshold) : quit_candidate(quit, threshold);
}

double ModelConfig::optimal_threshold() const {
    if (family == ModelFamily::sell) return sell_threshold(lambda_roots(sell.alpha0, sell.sigma1, sell.rho).lambda1, sell.a);
    return quit_threshold(quit).eta_star;
}

double ModelConfig::value(double s, double z) const {
    return family == ModelFamily::sell ? sell_value(s, z, sell) : quit_value(s, z, quit);
}

SimConfig ExperimentConfig::sim_config() const {
    SimConfig c;
    c.mode = numerics.mode;
    c.n = numerics.n;
    c.dt = numerics.dt;
    c.replications = numerics.replications;
    c.seed = seed;
    c.s = numerics.s;
    c.floor_epsilon = numerics.floor_epsilon;
    return c;
}

ConfigResult parse_config(const json& doc) {
    ConfigResult result;
    ExperimentConfig c;
    {
        Reader root(&doc, "", result.errors);
        if (!root.has("experiment")) root.error("experiment", "required");
        c.kind = root.choice("experiment", kAllKinds, c.kind);
        c.seed = root.unsigned_integer("seed", c.seed);
        c.output = root.string("output", c.output);
        if (!root.has("model")) root.error("model", "required");
        {
            Reader m = root.child("model");
            read_model(m, c.model);
        }
        {
            Reader n = root.child("numerics");
            read_numerics(n, c.model, c.numerics);
        }
        if (result.errors.empty()) check_experiment(root, c);
    }
    if (result.errors.empty()) result.config = std::move(c);
    return result;
}

ConfigResult load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) return {std::nullopt, {"cannot open " + path.string()}};
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        return {std::nullopt, {path.string() + ": parse error: " + e.what()}};
    }
    return parse_config(doc);
}

json normalize(const ExperimentConfig& c) {
    json model;
    model["family"] = to_string(c.model.family);
    if (c.model.family == ModelFamily::sell) {
        const auto& p = c.model.sell;
        model["alpha0"] = p.alpha0;
        model["sigma1"] = p.sigma1;
        model["sigma2"] = p.sigma2;
        model["rho"] = p.rho;
        model["a"] = p.a;
        json marks;
        if (p.levy.marks.kind() == MarkDistribution::Kind::constant) {
            marks = {{"kind", "constant"}, {"value", p.levy.marks.lo()}};
        } else {
            marks = {{"kind", "uniform"}, {"lo", p.levy.marks.lo()}, {"hi", p.levy.marks.hi()}};
        }
        model["jumps"] = {{"intensity", p.levy.intensity}, {"marks", marks}};
    } else {
        const auto& p = c.model.quit;
        model["sigma1"] = p.sigma1;
        model["sigma2"] = p.sigma2;
        model["gamma0"] = p.gamma0;
        model["intensity"] = p.intensity;
        model["rho"] = p.rho;
    }
    if (c.model.initial.kind() == InitialLaw::Kind::dirac) {
        model["initial"] = {{"kind", "dirac"}, {"x", c.model.initial.mean()}};
    } else {
        model["initial"] = {{"kind", "normal"}, {"mean", c.model.initial.mean()}, {"sd", c.model.initial.sd()}};
    }

    const auto& n = c.numerics;
    const auto& t = n.tolerances;
    json numerics;
    numerics["n"] = n.n;
    numerics["dt"] = n.dt;
    numerics["horizon"] = n.horizon;
    numerics["replications"] = n.replications;
    numerics["t_max"] = n.t_max;
    numerics["mode"] = to_string(n.mode);
    numerics["grid"] = {{"x_min", n.grid.x_min}, {"x_max", n.grid.x_max}, {"cells", n.grid.cells}};
    numerics["bandwidth"] = n.bandwidth ? json(*n.bandwidth) : json(nullptr);
    numerics["thresholds"] = n.thresholds;
    numerics["rule"] = {{"kind", to_string(n.rule.kind)},
                        {"threshold", n.rule.threshold ? json(*n.rule.threshold) : json("optimal")},
                        {"stop_time", n.rule.stop_time}};
    numerics["floor_epsilon"] = n.floor_epsilon ? json(*n.floor_epsilon) : json(nullptr);
    numerics["s"] = n.s;
    numerics["checkpoints"] = n.checkpoints;
    numerics["probe"] = {{"z_min", n.probe.z_min}, {"z_max", n.probe.z_max},         {"z_count", n.probe.z_count},
                         {"log_spaced", n.probe.log_spaced}, {"s_min", n.probe.s_min}, {"s_max", n.probe.s_max},
                         {"s_count", n.probe.s_count}};
    numerics["threshold_offset"] = n.threshold_offset;
    numerics["expect_flagged"] = n.expect_flagged;
    numerics["region"] = to_string(n.region);
    numerics["tolerances"] = {{"se_multiple", t.se_multiple}, {"rel_band", t.rel_band},
                              {"cells", t.cells},             {"residual", t.residual},
                              {"obstacle", t.obstacle},       {"fit", t.fit},
                              {"root_residual", t.root_residual}, {"l1", t.l1},
                              {"mass_defect", t.mass_defect}, {"oracle_error", t.oracle_error}};

    json out;
    out["experiment"] = to_string(c.kind);
    out["seed"] = c.seed;
    out["output"] = c.output;
    out["model"] = std::move(model);
    out["numerics"] = std::move(numerics);
    return out;
}

}  // namespace mvstop
