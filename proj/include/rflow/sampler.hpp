#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "rflow/distributions.hpp"
#include "rflow/metrics.hpp"
#include "rflow/network.hpp"
#include "rflow/training.hpp"

namespace rflow {

struct FlowTrajectory {
    std::vector<double> times;  // 0 = t_0 < ... < t_S = 1
    std::vector<Vec> states;    // S + 1 states

    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    const Vec& terminal() const { return states.back(); }
};

/// Explicit Euler on the uniform grid: Z_{s+1} = Z_s + v(Z_s, s/S) / S.
/// Throws NumericError if a state becomes non-finite.
FlowTrajectory euler_integrate(const VelocityField& field, std::span<const double> z0, std::size_t steps);

/// Same integration without storing the path; returns Z_1.
Vec euler_terminal(const VelocityField& field, std::span<const double> z0, std::size_t steps);

/// z0 + v(z0, 0).
Vec one_step_sample(const VelocityField& field, std::span<const double> z0);

/// Mean over grid points of |Z_t - ((1 - t) Z_0 + t Z_1)|^2; zero exactly on chords.
double straightness(const FlowTrajectory& traj);

/// Writes traj_id,t,coord_0,...,coord_{d-1} rows. Header only when `header` is set.
void write_trajectory_csv(std::ostream& out, std::span<const FlowTrajectory> trajectories, bool header = true);

struct ReflowState {
    std::size_t round = 0;
    VelocityNet net;
    std::vector<std::pair<Vec, Vec>> coupling;  // (Z_0, Z_1) pairs generated by the previous round's net
};

struct ReflowOptions {
    std::size_t n_synth = 1024;
    std::size_t euler_steps = 100;
    TrainConfig train;
};

/// One reflow round: integrates the current net from fresh pi0 draws, then
/// retrains (warm-started from the current net) on the coupled pairs
/// (Z_0, Z_1) with fresh t ~ U[0,1]. Never touches the target distribution.
ReflowState reflow(const ReflowState& state, Source& pi0, const ReflowOptions& options, RngStream& rng);

/// Mean straightness of trajectories from the given starting points.
double mean_straightness(const VelocityField& field, std::span<const Vec> starts, std::size_t steps);

}  // namespace rflow
