#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "rflow/distributions.hpp"
#include "rflow/network.hpp"

namespace rflow {

enum class StepSchedule { constant, diminishing };

struct TrainConfig {
    std::size_t n_samples = 0;  // 0: whatever the dataset holds
    std::size_t batch_size = 32;
    std::size_t steps = 1000;
    StepSchedule schedule = StepSchedule::constant;
    double eta = 1e-2;        // constant schedule
    double c = 2.0;           // diminishing: eta_k = c / (k + gamma)
    double gamma = 20.0;
    double mu_hat = 1.0;      // assumed PL constant
    double kappa_hat = 10.0;  // assumed smoothness
    std::uint64_t seed = 0;

    /// Step size at iteration k (0-based).
    double step_size(std::size_t k) const;

    /// Constant: eta <= 1/kappa_hat. Diminishing: c > 1/mu_hat and gamma >= kappa_hat c.
    void validate() const;
};

/// Raised when the training loss exceeds 1e3 times its initial value.
class TrainingDiverged : public NumericError {
public:
    using NumericError::NumericError;
};

struct TrainStep {
    double loss = 0.0;       // minibatch loss before the update (the full loss when batch = n)
    double grad_norm = 0.0;  // norm of the minibatch gradient
    double eta = 0.0;
    double max_row_l1 = 0.0; // after projection
};

struct TrainTrace {
    std::vector<TrainStep> steps;
    double initial_loss = 0.0;  // full empirical loss at the start
    double final_loss = 0.0;    // full empirical loss at the end
    std::vector<double> final_theta;

    void write_csv(std::ostream& out) const;
};

struct TrainResult {
    VelocityNet net;
    TrainTrace trace;
};

/// (1/n) sum |v_theta(x_t, t) - (x1 - x0)|^2.
double empirical_loss(const VelocityNet& net, std::span<const CoupledSample> data);

/// Projected SGD over epoch-shuffled minibatches drawn without replacement.
/// Rows are projected back onto the l1 ball after every step.
TrainResult train(VelocityNet net, std::span<const CoupledSample> data, const TrainConfig& cfg);

/// Smoothness estimate: max over random probes of |grad(theta + u) - grad(theta)| / |u|.
double estimate_smoothness(const VelocityNet& net, std::span<const CoupledSample> data, std::size_t probes,
                           double radius, RngStream& rng);

struct PLReport {
    std::vector<std::optional<double>> ratios;  // empty where L - L* < 1e-12
    double min_ratio = 0.0;                     // empirical lower estimate of mu
    std::size_t degenerate_steps = 0;
    double mu_hat = 0.0;
};

/// Per-step |grad|^2 / (2 (L - loss_star)) along a trace.
PLReport pl_diagnostic(const TrainTrace& trace, double mu_hat, double loss_star);

/// L(theta) = 1/2 sum_i curvature_i theta_i^2 with stochastic gradients
/// grad L + noise, noise ~ N(0, noise_sigma^2 / p I) so E|noise|^2 = noise_sigma^2.
struct QuadraticProblem {
    std::vector<double> curvatures;
    double noise_sigma = 0.0;
    double theta0_scale = 1.0;  // theta_0 = theta0_scale * (1, ..., 1)

    double mu() const;
    double kappa() const;
    double loss(std::span<const double> theta) const;
};

struct SgdRateConfig {
    StepSchedule schedule = StepSchedule::diminishing;
    double eta = 0.05;
    double c = 2.0;
    double gamma = 20.0;
    std::size_t steps = 20000;
    std::size_t seeds = 20;
    std::uint64_t base_seed = 0;
};

struct SgdRateReport {
    std::vector<double> mean_gap;  // seed-averaged L(theta_k) - L*, k = 0..steps
    std::vector<double> envelope;  // iterated recursion delta_{k+1} = (1 - mu eta_k) delta_k + kappa sigma^2 eta_k^2 / 2
    double slope = 0.0;            // log-log slope over the final decade
    double worst_envelope_ratio = 0.0;  // max_{k >= 10} mean_gap_k / envelope_k
};

SgdRateReport sgd_rate_check(const QuadraticProblem& problem, const SgdRateConfig& cfg);

/// Numerically iterated upper recursion for the expected optimality gap.
std::vector<double> recursion_envelope(double delta0, double mu, double kappa, double sigma2,
                                       const SgdRateConfig& cfg);

}  // namespace rflow
