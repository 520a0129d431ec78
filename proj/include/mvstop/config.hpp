#pragma once

// Experiment configuration documents (JSON). Parsing is strict: unknown keys,
// wrong types and violated model preconditions are all collected and reported
// together. See README.md for the schema.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvstop/generator.hpp"
#include "mvstop/grid.hpp"
#include "mvstop/model.hpp"
#include "mvstop/stopping.hpp"

namespace mvstop {

enum class ExperimentKind {
    simulate_path,
    fokker_planck_compare,
    var_ineq_check,
    evaluate_rule,
    threshold_sweep,
    dynkin_check,
    closed_form_report,
};

const char* to_string(ExperimentKind kind);

struct ModelConfig {
    ModelFamily family = ModelFamily::sell;
    SellParams sell;
    QuitParams quit;
    InitialLaw initial = InitialLaw::dirac(1.0);

    double rho() const { return family == ModelFamily::sell ? sell.rho : quit.rho; }
    ModelSpec spec() const;
    Reward reward() const;
    ValueCandidate candidate(std::optional<double> threshold = std::nullopt) const;
    /// Closed-form optimal threshold (xi* or eta*).
    double optimal_threshold() const;
    /// Closed-form value at (s, z).
    double value(double s, double z) const;
};

struct RuleConfig {
    StoppingRule::Kind kind = StoppingRule::Kind::threshold_up;
    std::optional<double> threshold;  // nullopt: the closed-form optimum
    double stop_time = 0.0;
};

struct Tolerances {
    double se_multiple = 3.0;
    double rel_band = 0.02;
    std::size_t cells = 1;
    double residual = 1e-10;
    double obstacle = 1e-12;
    double fit = 1e-8;
    double root_residual = 1e-12;
    double l1 = 0.1;
    double mass_defect = 1e-6;
    double oracle_error = 0.05;
};

struct NumericsConfig {
    std::size_t n = 1000;
    double dt = 1e-3;
    double horizon = 1.0;
    std::size_t replications = 1000;
    double t_max = 0.0;  // resolved to 20 / rho when absent
    SimMode mode = SimMode::fast;
    UniformGrid grid{-3.0, 3.0, 600};
    std::optional<double> bandwidth;  // nullopt: Silverman's rule
    std::vector<double> thresholds;
    RuleConfig rule;
    std::optional<double> floor_epsilon;
    double s = 0.0;
    std::vector<double> checkpoints;
    ProbeGrid probe;
    double threshold_offset = 0.0;
    bool expect_flagged = false;
    Region region = Region::continuation;
    Tolerances tolerances;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::closed_form_report;
    ModelConfig model;
    NumericsConfig numerics;
    std::uint64_t seed = 1;
    std::string output = "results";

    SimConfig sim_config() const;
};

struct ConfigResult {
    std::optional<ExperimentConfig> config;
    std::vector<std::string> errors;

    bool ok() const { return config.has_value(); }
};

ConfigResult parse_config(const nlohmann::json& doc);
/// Reads and parses a file; I/O and syntax problems are reported as errors.
ConfigResult load_config(const std::filesystem::path& path);

/// Fully explicit form with every default filled in; parse_config accepts it
/// and normalizing the result reproduces it exactly.
nlohmann::json normalize(const ExperimentConfig& config);

}  // namespace mvstop
