#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rflow/bounds.hpp"
#include "rflow/distributions.hpp"
#include "rflow/metrics.hpp"
#include "rflow/network.hpp"
#include "rflow/oracles.hpp"
#include "rflow/sampler.hpp"
#include "rflow/serialize.hpp"
#include "rflow/training.hpp"

namespace rflow {

enum class Task { gaussian_1d, gaussian_2d, mixture_2d, lowerbound };

std::string to_string(Task t);
Task task_from_string(const std::string& name);

struct SweepSettings {
    std::vector<std::size_t> grid{128, 256, 512, 1024, 2048, 4096, 8192};
    std::size_t trials = 10;
    std::uint64_t base_seed = 1;
    std::size_t n_reference = 1 << 16;  // training set of the population-minimizer proxy
    std::size_t reference_steps = 20000;
    std::size_t n_holdout = 4096;
    std::size_t n_eval = 4096;          // pushforward samples for W2; d >= 2 is capped at 512
    std::size_t euler_steps = 100;
    std::size_t n_mc = 4096;            // draws for the velocity L2 error
    std::size_t polish_steps = 200;     // full-batch steps after the minibatch phase
    double polish_eta = 0.05;
    bool warm_start = false;            // start every trial from the proxy instead of a fresh init
};

struct SampleSettings {
    std::size_t steps = 100;
    std::size_t count = 1000;
    std::size_t reflow_rounds = 0;
    std::size_t n_synth = 1024;
    std::size_t trajectories = 0;  // how many trajectories to export
    std::size_t straightness_probes = 256;
};

struct LowerBoundSettings {
    double sigma = 1.0;
    double R = 10.0;
    double epsilon = 0.1;
    double c_interval = 1.0;
    double x_lo = -15.0;
    double x_hi = 15.0;
    std::size_t grid_points = 601;
    std::size_t m = 1000;  // sample count for the Le Cam budget
};

struct ExperimentConfig {
    Task task = Task::gaussian_1d;
    DistributionSpec pi0 = DistributionSpec::gaussian({0.0}, 1.0);
    DistributionSpec pi1 = DistributionSpec::gaussian({2.0}, 1.0);
    NetArchitecture arch;
    TrainConfig train;
    SweepSettings sweep;
    SampleSettings sample;
    BoundInputs bounds;
    LowerBoundSettings lowerbound;
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    /// Throws ConfigError naming the field.
    void validate() const;
};

ExperimentConfig preset(Task task);

/// Overlays a JSON document on the task preset. "task" and "train.steps" are required.
ExperimentConfig experiment_from_json(const Json& j);
Json to_json(const ExperimentConfig& cfg);

/// Gaussian endpoints of the config, when both are single Gaussians.
std::optional<GaussianPairSpec> gaussian_pair(const DistributionSpec& pi0, const DistributionSpec& pi1);

std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t n, std::size_t trial);

/// Trains one model on train.n_samples fresh triples, seeded by `seed`.
TrainResult train_model(const ExperimentConfig& cfg, std::uint64_t seed);

struct SweepRow {
    std::size_t n = 0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    double excess_risk = 0.0;
    double vel_l2 = 0.0;  // NaN when no closed-form velocity exists
    double w2 = 0.0;
    double w2_baseline = 0.0;
    double runtime_ms = 0.0;
    std::string status = "ok";
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::optional<RateFit> excess_fit;
    std::optional<RateFit> w2_fit;  // on the baseline-corrected W2
    std::vector<std::pair<double, double>> w2_corrected;  // (n, corrected W2) per grid point
    double reference_loss = 0.0;
};

/// Fresh data, training and measurement for every (n, trial); rows come back
/// ordered by (n, trial) regardless of `jobs`. Without `timing` runtime_ms is 0
/// so outputs are byte-reproducible.
SweepResult run_sweep(const ExperimentConfig& cfg, std::size_t jobs, bool timing);

/// n,trial,seed,excess_risk,vel_l2,w2,w2_baseline,runtime_ms,status
void write_sweep_csv(std::ostream& out, const SweepResult& result);
Json rate_fit_json(const SweepResult& result);

/// Python script that plots the sweep CSV on log-log axes.
std::string sweep_plot_script(const std::string& csv_name);

struct ReflowRound {
    std::size_t round = 0;
    double straightness = 0.0;
    double one_step_w2 = 0.0;
};

struct ReflowStudy {
    std::vector<ReflowRound> rounds;  // round 0 is the initial model
    std::size_t target_draws_before = 0;
    std::size_t target_draws_after = 0;
    VelocityNet final_net{NetArchitecture{}};
};

/// Trains a model, then runs `rounds` reflow rounds, measuring straightness and
/// one-step W2 (assignment on up to 512 points) after each.
ReflowStudy reflow_study(const ExperimentConfig& cfg, const VelocityNet& initial, std::size_t rounds, std::uint64_t seed);

}  // namespace rflow
