#include "mvstop/particle.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mvstop/error.hpp"

namespace mvstop {

CommonNoisePath CommonNoisePath::generate(std::uint64_t seed, std::uint32_t replication, double dt,
                                          std::size_t steps) {
    if (!(dt > 0.0)) throw std::invalid_argument("common noise needs dt > 0");
    CommonNoisePath path{dt, std::vector<double>(steps)};
    CommonNoiseSource source(seed, replication);
    const double sqrt_dt = std::sqrt(dt);
    for (std::size_t k = 0; k < steps; ++k) path.increments[k] = sqrt_dt * source.normal(k);
    return path;
}

ParticleCloud init_cloud(const InitialLaw& law, std::size_t n, StreamId id) {
    if (n == 0) throw std::invalid_argument("particle cloud needs n >= 1");
    if (n > kMaxEntity) throw std::invalid_argument("particle count exceeds stream entity range");
    ParticleCloud cloud;
    cloud.states.resize(n);
    const CounterStream base(id.seed, id.replication, StreamTag::initial_law);
    for (std::size_t i = 0; i < n; ++i) {
        if (law.kind() == InitialLaw::Kind::dirac) {
            cloud.states[i] = law.mean();
        } else {
            const auto z = base.with_entity(static_cast<std::uint32_t>(i)).normal_pair(0)[0];
            cloud.states[i] = law.sample(z);
        }
    }
    return cloud;
}

namespace {

struct StepFrame {
    const ModelSpec* spec;
    const JumpSampler* jumps;
    CounterStream stream;
    double t;
    double m;
    double dt;
    double sqrt_dt;
    double dB1;
    std::uint32_t step;
};

// Single-particle update shared by the serial and parallel loops.
inline double advance_particle(const StepFrame& f, std::size_t i, double x) {
    const ModelSpec& spec = *f.spec;
    double next = x + spec.drift(f.t, x, f.m) * f.dt + spec.diffusion_common(f.t, x, f.m) * f.dB1;
    const double beta2 = spec.diffusion_idio(f.t, x, f.m);
    const CounterStream stream = f.stream.with_entity(static_cast<std::uint32_t>(i));
    if (beta2 != 0.0) next += beta2 * f.sqrt_dt * stream.normal_pair(f.step, 0)[0];
    if (f.jumps->active()) next += spec.jump_scale(f.t, x, f.m) * f.jumps->sample(stream, f.step).compensated();
    return next;
}

}  // namespace

StepStats step(ParticleCloud& cloud, const ModelSpec& spec, double dt, double dB1, StreamId id,
               const StepOptions& options) {
    if (!(dt > 0.0)) throw std::invalid_argument("particle step needs dt > 0");
    if (cloud.states.empty()) throw std::invalid_argument("empty particle cloud");

    const JumpSampler jumps(spec.levy(), dt);
    const StepFrame frame{&spec,
                          &jumps,
                          CounterStream(id.seed, id.replication, StreamTag::idiosyncratic),
                          cloud.time,
                          conditional_mean(cloud),
                          dt,
                          std::sqrt(dt),
                          dB1,
                          static_cast<std::uint32_t>(cloud.step_count)};

    const bool floor = options.floor_epsilon.has_value();
    const double eps = options.floor_epsilon.value_or(0.0);
    const auto n = static_cast<std::ptrdiff_t>(cloud.states.size());
    double* states = cloud.states.data();
    std::size_t floor_events = 0;
    std::ptrdiff_t bad = std::numeric_limits<std::ptrdiff_t>::max();

    const bool parallel = options.exec == Exec::parallel && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (parallel) reduction(+ : floor_events) reduction(min : bad)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double x = advance_particle(frame, static_cast<std::size_t>(i), states[i]);
        if (!std::isfinite(x)) {
            bad = std::min(bad, i);
        } else if (floor && x < eps) {
            x = eps;
            ++floor_events;
        }
        states[i] = x;
    }

    if (bad != std::numeric_limits<std::ptrdiff_t>::max()) {
        throw NumericalAbort("non-finite particle state at t=" + std::to_string(cloud.time + dt) +
                                 " particle " + std::to_string(bad),
                             cloud.time + dt, bad);
    }
    cloud.time += dt;
    ++cloud.step_count;
    return {floor_events};
}

Trajectory simulate_path(const ModelSpec& spec, std::size_t n, const CommonNoisePath& common, StreamId id,
                         const PathOptions& options) {
    Trajectory traj;
    traj.replication = id.replication;
    traj.n = n;
    ParticleCloud cloud = init_cloud(spec.initial_law(), n, id);

    std::vector<double> pending = options.snapshot_times;
    std::sort(pending.begin(), pending.end());
    std::size_t next_snapshot = 0;
    auto take_snapshots = [&](double t, double dt) {
        while (next_snapshot < pending.size() && pending[next_snapshot] <= t + 0.5 * dt) {
            traj.snapshots.push_back(cloud);
            ++next_snapshot;
        }
    };

    traj.points.reserve(common.increments.size() + 1);
    traj.points.push_back({0.0, conditional_mean(cloud), 0});
    take_snapshots(0.0, common.dt);
    std::size_t floors = 0;
    for (std::size_t k = 0; k < common.increments.size(); ++k) {
        floors += step(cloud, spec, common.dt, common.increments[k], id, options.step).floor_events;
        const double t = common.dt * static_cast<double>(k + 1);
        cloud.time = t;
        traj.points.push_back({t, conditional_mean(cloud), floors});
        take_snapshots(t, common.dt);
    }
    return traj;
}

void write_trajectory_csv(std::ostream& out, std::span<const Trajectory> trajectories,
                          std::span<const double> times) {
    out << "replication,t,m_bar,n,floor_events\n";
    out << std::setprecision(17);
    auto row = [&](const Trajectory& tr, const TrajectoryPoint& p) {
        out << tr.replication << ',' << p.t << ',' << p.m_bar << ',' << tr.n << ',' << p.floor_events << '\n';
    };
    for (const auto& tr : trajectories) {
        if (tr.points.empty()) continue;
        if (times.empty()) {
            for (const auto& p : tr.points) row(tr, p);
            continue;
        }
        const double dt = tr.points.size() > 1 ? tr.points[1].t - tr.points[0].t : 1.0;
        for (double t : times) {
            const auto k = static_cast<std::size_t>(std::llround(std::max(t, 0.0) / dt));
            row(tr, tr.points[std::min(k, tr.points.size() - 1)]);
        }
    }
}

double silverman_bandwidth(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 2) throw std::invalid_argument("Silverman bandwidth needs at least two samples");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double mean = exact_sum(sorted) / static_cast<double>(n);
    ExactAccumulator ss;
    for (double x : sorted) ss.add((x - mean) * (x - mean));
    const double sd = std::sqrt(ss.result() / static_cast<double>(n - 1));
    auto quantile = [&](double p) {
        const double pos = p * static_cast<double>(n - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, n - 1);
        return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    const double iqr = quantile(0.75) - quantile(0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    if (!(spread > 0.0)) throw std::invalid_argument("Silverman bandwidth undefined for a degenerate sample");
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

GridDensity kde_density(const ParticleCloud& cloud, double bandwidth, const UniformGrid& grid, Exec exec) {
    if (!(bandwidth > 0.0)) throw std::invalid_argument("KDE bandwidth must be > 0");
    if (cloud.states.empty()) throw std::invalid_argument("KDE of an empty cloud");
    grid.validate();

    std::vector<double> sorted = cloud.states;
    std::sort(sorted.begin(), sorted.end());
    const auto first_in = std::lower_bound(sorted.begin(), sorted.end(), grid.x_min);
    const auto last_in = std::upper_bound(sorted.begin(), sorted.end(), grid.x_max);
    const double outside =
        static_cast<double>(sorted.size() - static_cast<std::size_t>(last_in - first_in)) / static_cast<double>(sorted.size());
    if (outside > 0.01) {
        throw std::domain_error("KDE grid too narrow: particle mass outside grid = " + std::to_string(outside));
    }

    GridDensity d{grid, std::vector<double>(grid.size()), cloud.time};
    const double reach = 8.0 * bandwidth;
    const double inv_h = 1.0 / bandwidth;
    const double norm = inv_h / (std::sqrt(2.0 * std::numbers::pi) * static_cast<double>(sorted.size()));
    const auto nodes = static_cast<std::ptrdiff_t>(grid.size());
    const bool parallel = exec == Exec::parallel && !omp_in_parallel();
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t i = 0; i < nodes; ++i) {
        const double x = grid.node(static_cast<std::size_t>(i));
        auto it = std::lower_bound(sorted.begin(), sorted.end(), x - reach);
        const auto end = std::upper_bound(it, sorted.end(), x + reach);
        double s = 0.0;
        for (; it != end; ++it) {
            const double u = (x - *it) * inv_h;
            s += std::exp(-0.5 * u * u);
        }
        d.values[static_cast<std::size_t>(i)] = s * norm;
    }
    const double m = mass(d);
    if (!(m > 0.0)) throw std::domain_error("KDE has no mass on the grid");
    for (double& v : d.values) v /= m;
    return d;
}

}  // namespace mvstop
