#pragma once

// Batch runner. One run writes into its output directory:
//   manifest.json  normalized config, version, seed, manifest hash, wall time
//   <result>.csv / <result>.json  the experiment's data, tagged with the hash
//   summary.json   assertions against the configured tolerances
// Everything except the wall time is a function of the config alone.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mvstop/config.hpp"

namespace mvstop {

const char* artifact_version();

/// Hex FNV-1a of the artifact version and the normalized config.
std::string manifest_hash(const ExperimentConfig& config);

struct RunOptions {
    std::optional<std::filesystem::path> output;  // overrides config.output
    std::optional<int> workers;
};

struct Assertion {
    std::string name;
    double value = 0.0;
    double limit = 0.0;
    bool passed = false;
};

struct RunOutcome {
    bool passed = false;
    std::filesystem::path directory;
    std::string manifest_hash;
    std::vector<Assertion> assertions;
    std::optional<std::string> error;
    std::vector<std::string> files;
};

/// Runs the experiment and writes its files. Numerical aborts and other
/// failures inside the experiment are recorded in the summary (passed = false).
RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Worker count from MVSTOP_WORKERS; nullopt when unset. Throws
/// std::invalid_argument for a value that is not a positive integer.
std::optional<int> workers_from_env();

/// Human-readable digest of a results directory. Throws std::runtime_error
/// when the summary or manifest is missing or unreadable.
std::string report(const std::filesystem::path& directory, bool* passed = nullptr);

}  // namespace mvstop
