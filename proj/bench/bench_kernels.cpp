// Serial reference vs OpenMP path for the hot kernels. Arg(0) is serial,
// Arg(1) parallel with the default thread count.

#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "mvstop/fokker_planck.hpp"
#include "mvstop/particle.hpp"
#include "mvstop/stopping.hpp"

using namespace mvstop;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::serial : Exec::parallel; }

ModelSpec sell_spec() {
    return make_sell_model(0.1, 0.3, 0.2, {1.0, MarkDistribution::constant(-0.2)}, InitialLaw::dirac(1.0));
}

void BM_ParticleStep(benchmark::State& state) {
    const auto spec = sell_spec();
    const StreamId id{1, 0};
    auto cloud = init_cloud(spec.initial_law(), 100000, id);
    StepOptions options;
    options.exec = exec_of(state);
    for (auto _ : state) {
        step(cloud, spec, 1e-3, 0.01, id, options);
        benchmark::DoNotOptimize(cloud.states.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cloud.n()));
}

void BM_Kde(benchmark::State& state) {
    const auto spec = make_quit_model(0.3, 0.2, 0.0, 0.0, InitialLaw::normal(0.0, 0.5));
    const auto cloud = init_cloud(spec.initial_law(), 100000, {2, 0});
    const UniformGrid grid{-4.0, 4.0, 800};
    const double h = silverman_bandwidth(cloud.states);
    for (auto _ : state) benchmark::DoNotOptimize(kde_density(cloud, h, grid, exec_of(state)));
}

void BM_SpideStep(benchmark::State& state) {
    const auto spec = make_quit_model(0.3, 0.1, 0.1, 1.0, InitialLaw::normal(0.0, 0.5));
    const UniformGrid grid{-4.0, 4.0, 4000};
    auto density = density_from_pdf(grid, [](double x) { return std::exp(-2.0 * x * x); });
    SpideOptions options;
    options.exec = exec_of(state);
    const double dt = 0.5 * max_stable_dt(density, spec, options);
    for (auto _ : state) benchmark::DoNotOptimize(step_spide(density, spec, dt, 0.0, options));
}

void BM_McReplications(benchmark::State& state) {
    const SellParams p;
    const auto spec = make_model(p, InitialLaw::dirac(1.0));
    SimConfig config;
    config.dt = 1e-3;
    config.replications = 2000;
    config.exec = exec_of(state);
    const auto rule = StoppingRule::up(2.7127, 20.0);
    for (auto _ : state) benchmark::DoNotOptimize(evaluate_rule_mc(spec, rule, sell_reward(p), config));
}

}  // namespace

BENCHMARK(BM_ParticleStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Kde)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SpideStep)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_McReplications)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
