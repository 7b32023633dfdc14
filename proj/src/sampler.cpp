#include "rflow/sampler.hpp"

#include <ostream>
#include <stdexcept>

namespace rflow {

namespace {

void euler_step(const VelocityField& field, Vec& z, double t, double h) {
    const Vec v = field(z, t);
    if (v.size() != z.size()) throw std::invalid_argument("euler: field returned the wrong dimension");
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += h * v[k];
    if (!all_finite(z)) throw NumericError("euler: state became non-finite at t = " + std::to_string(t));
}

}  // namespace

FlowTrajectory euler_integrate(const VelocityField& field, std::span<const double> z0, std::size_t steps) {
    if (steps == 0) throw std::invalid_argument("euler_integrate: steps must be at least 1");
    require_finite(z0, "euler_integrate initial state");
    const double S = static_cast<double>(steps);
    const double h = 1.0 / S;
    FlowTrajectory traj;
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);
    Vec z(z0.begin(), z0.end());
    traj.times.push_back(0.0);
    traj.states.push_back(z);
    for (std::size_t s = 0; s < steps; ++s) {
        euler_step(field, z, static_cast<double>(s) / S, h);
        traj.times.push_back(s + 1 == steps ? 1.0 : static_cast<double>(s + 1) / S);
        traj.states.push_back(z);
    }
    return traj;
}

Vec euler_terminal(const VelocityField& field, std::span<const double> z0, std::size_t steps) {
    if (steps == 0) throw std::invalid_argument("euler_terminal: steps must be at least 1");
    require_finite(z0, "euler_terminal initial state");
    const double S = static_cast<double>(steps);
    Vec z(z0.begin(), z0.end());
    for (std::size_t s = 0; s < steps; ++s) euler_step(field, z, static_cast<double>(s) / S, 1.0 / S);
    return z;
}

Vec one_step_sample(const VelocityField& field, std::span<const double> z0) { return euler_terminal(field, z0, 1); }

double straightness(const FlowTrajectory& traj) {
    if (traj.states.size() < 3 || traj.states.size() != traj.times.size())
        throw std::invalid_argument("straightness: need a trajectory with at least 2 steps");
    const Vec& z0 = traj.states.front();
    const Vec& z1 = traj.states.back();
    double total = 0.0;
    for (std::size_t i = 0; i < traj.states.size(); ++i) {
        const Vec chord = lerp(z0, z1, traj.times[i]);
        total += norm2_squared(sub(traj.states[i], chord));
    }
    return total / static_cast<double>(traj.states.size());
}

void write_trajectory_csv(std::ostream& out, std::span<const FlowTrajectory> trajectories, bool header) {
    if (header) {
        out << "traj_id,t";
        const std::size_t d = trajectories.empty() ? 0 : trajectories.front().states.front().size();
        for (std::size_t k = 0; k < d; ++k) out << ",coord_" << k;
        out << '\n';
    }
    out.precision(17);
    for (std::size_t id = 0; id < trajectories.size(); ++id) {
        const auto& traj = trajectories[id];
        for (std::size_t i = 0; i < traj.states.size(); ++i) {
            out << id << ',' << traj.times[i];
            for (double x : traj.states[i]) out << ',' << x;
            out << '\n';
        }
    }
}

ReflowState reflow(const ReflowState& state, Source& pi0, const ReflowOptions& options, RngStream& rng) {
    if (options.n_synth == 0) throw std::invalid_argument("reflow: n_synth must be positive");
    const VelocityField field = field_of(state.net);

    ReflowState next{state.round + 1, state.net, {}};
    next.coupling.reserve(options.n_synth);
    std::vector<CoupledSample> data;
    data.reserve(options.n_synth);
    for (std::size_t i = 0; i < options.n_synth; ++i) {
        Vec z0 = pi0.draw(rng);
        Vec z1 = euler_terminal(field, z0, options.euler_steps);
        const double t = rng.uniform();
        data.push_back(CoupledSample::make(z0, z1, t));
        next.coupling.emplace_back(std::move(z0), std::move(z1));
    }
    TrainConfig cfg = options.train;
    cfg.n_samples = 0;
    next.net = train(state.net, data, cfg).net;
    return next;
}

double mean_straightness(const VelocityField& field, std::span<const Vec> starts, std::size_t steps) {
    if (starts.empty()) throw std::invalid_argument("mean_straightness: no starting points");
    double total = 0.0;
    for (const auto& z0 : starts) total += straightness(euler_integrate(field, z0, steps));
    return total / static_cast<double>(starts.size());
}

}  // namespace rflow
