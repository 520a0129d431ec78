#pragma once

// Interacting particle approximation of the conditional law mu_t.
//
// All N particles of one replication share a single common-noise path B1;
// each has its own idiosyncratic Brownian increments and jumps drawn from
// counter-based streams keyed by (seed, replication, particle, step). The
// empirical measure of the cloud plays the role of mu_t, and its mean is
// the conditional mean m = <mu_t, q> entering the coefficients.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "mvstop/grid.hpp"
#include "mvstop/model.hpp"
#include "mvstop/reduce.hpp"

namespace mvstop {

struct ParticleCloud {
    double time = 0.0;
    std::uint64_t step_count = 0;  // counter used for the particles' streams
    std::vector<double> states;

    std::size_t n() const { return states.size(); }
};

/// Increments of B1 on a uniform time grid for one replication.
struct CommonNoisePath {
    double dt = 0.0;
    std::vector<double> increments;

    double horizon() const { return dt * static_cast<double>(increments.size()); }

    /// Increments sqrt(dt) * z_k with z_k the replication's common-noise normals.
    static CommonNoisePath generate(std::uint64_t seed, std::uint32_t replication, double dt, std::size_t steps);
};

/// Identifies the random streams of one replication.
struct StreamId {
    std::uint64_t seed = 0;
    std::uint32_t replication = 0;
};

struct StepOptions {
    /// When set, states of the multiplicative model that fall below this
    /// level after a step are raised to it and counted.
    std::optional<double> floor_epsilon;
    Exec exec = Exec::parallel;
};

struct StepStats {
    std::size_t floor_events = 0;
};

/// n independent draws from the initial law. Throws for n == 0.
ParticleCloud init_cloud(const InitialLaw& law, std::size_t n, StreamId id);

/// (1/n) sum q(x_i), correctly rounded and therefore independent of particle order.
template <class Q>
double conditional_pairing(const ParticleCloud& cloud, Q&& q) {
    ExactAccumulator acc;
    for (double x : cloud.states) acc.add(q(x));
    return acc.result() / static_cast<double>(cloud.n());
}

inline double conditional_mean(const ParticleCloud& cloud) {
    return conditional_pairing(cloud, [](double x) { return x; });
}

/// One Euler-Maruyama step of every particle, in place. The conditional mean
/// is frozen at the step start; dB1 is shared by all particles.
/// Throws NumericalAbort on a non-finite state (time and particle index recorded).
StepStats step(ParticleCloud& cloud, const ModelSpec& spec, double dt, double dB1, StreamId id,
               const StepOptions& options = {});

struct TrajectoryPoint {
    double t = 0.0;
    double m_bar = 0.0;
    std::size_t floor_events = 0;  // cumulative
};

struct Trajectory {
    std::uint32_t replication = 0;
    std::size_t n = 0;
    std::vector<TrajectoryPoint> points;    // one per step, including t = 0
    std::vector<ParticleCloud> snapshots;   // at requested snapshot times
};

struct PathOptions {
    std::vector<double> snapshot_times;
    StepOptions step;
};

/// Advances (X, mu) jointly along `common`; the horizon is common.horizon().
Trajectory simulate_path(const ModelSpec& spec, std::size_t n, const CommonNoisePath& common, StreamId id,
                         const PathOptions& options = {});

/// CSV rows (replication, t, m_bar, n, floor_events) at the given times
/// (nearest recorded step); all points when `times` is empty.
void write_trajectory_csv(std::ostream& out, std::span<const Trajectory> trajectories,
                          std::span<const double> times = {});

/// Silverman's rule of thumb 0.9 min(sd, IQR/1.34) n^(-1/5).
double silverman_bandwidth(std::span<const double> samples);

/// Gaussian KDE on `grid`, renormalized to unit trapezoid mass. Throws
/// std::domain_error when more than 1% of the particles lie off the grid.
GridDensity kde_density(const ParticleCloud& cloud, double bandwidth, const UniformGrid& grid,
                        Exec exec = Exec::parallel);

}  // namespace mvstop
