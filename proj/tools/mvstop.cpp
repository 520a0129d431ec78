#include <omp.h>

#include <CLI11.hpp>
#include <exception>
#include <iostream>

#include "mvstop/config.hpp"
#include "mvstop/runner.hpp"

namespace {

constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

std::optional<mvstop::ExperimentConfig> load_or_report(const std::string& path) {
    auto result = mvstop::load_config(path);
    if (!result.ok()) {
        std::cerr << path << ": " << result.errors.size() << " configuration error(s)\n";
        for (const auto& e : result.errors) std::cerr << "  " << e << '\n';
        return std::nullopt;
    }
    return result.config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal stopping experiments for conditional McKean-Vlasov jump diffusions"};
    app.set_version_flag("--version", mvstop::artifact_version());
    app.require_subcommand(1);

    std::string config_path;
    std::string output;
    std::string results_dir;

    auto* run = app.add_subcommand("run", "Run an experiment and write its result files");
    run->add_option("config", config_path, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("-o,--output", output, "Output directory (overrides the config)");

    auto* validate = app.add_subcommand("validate", "Check a configuration and print its normalized form");
    validate->add_option("config", config_path, "Experiment configuration (JSON)")->required()->check(CLI::ExistingFile);

    auto* show = app.add_subcommand("report", "Summarize a results directory");
    show->add_option("results", results_dir, "Results directory")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) {
            const auto config = load_or_report(config_path);
            if (!config) return kExitUsage;
            std::cout << mvstop::normalize(*config).dump(2) << '\n';
            return 0;
        }
        if (*run) {
            const auto config = load_or_report(config_path);
            if (!config) return kExitUsage;
            mvstop::RunOptions options;
            options.workers = mvstop::workers_from_env();
            if (!output.empty()) options.output = output;
            const auto outcome = mvstop::run_experiment(*config, options);
            bool passed = false;
            std::cout << mvstop::report(outcome.directory, &passed);
            return passed ? 0 : kExitFail;
        }
        bool passed = false;
        std::cout << mvstop::report(results_dir, &passed);
        return passed ? 0 : kExitFail;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}
