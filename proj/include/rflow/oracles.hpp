#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>

#include "rflow/linalg.hpp"
#include "rflow/metrics.hpp"
#include "rflow/rng.hpp"

namespace rflow {

/// Independent Gaussian endpoints X0 ~ N(mu0, std0^2 I), X1 ~ N(mu1, std1^2 I).
struct GaussianPairSpec {
    Vec mu0;
    Vec mu1;
    double std0 = 1.0;
    double std1 = 1.0;

    void validate() const;
};

/// v*(x, t) = E[X1 - X0 | X_t = x] by joint-Gaussian regression:
///   (mu1 - mu0) + k(t) (x - ((1-t) mu0 + t mu1)),
///   k(t) = (t std1^2 - (1-t) std0^2) / ((1-t)^2 std0^2 + t^2 std1^2),
/// with k = 0 where X_t is deterministic (point masses).
Vec vstar_gaussian(const GaussianPairSpec& spec, std::span<const double> x, double t);

VelocityField vstar_field(GaussianPairSpec spec);

struct MonteCarloEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Monte-Carlo estimate of int_0^1 E|v(X_t, t) - v*(X_t, t)|^2 dt under the
/// independent Gaussian coupling.
MonteCarloEstimate velocity_l2_error(const VelocityField& field, const GaussianPairSpec& spec, std::size_t n_mc,
                                     RngStream& rng);

/// Two-point construction in one dimension:
///   pi0 = N(0, sigma^2),
///   pi1^(1) = (1 - eta) N(0, sigma^2) + eta N(-R, sigma^2),
///   pi1^(2) = (1 - eta) N(0, sigma^2) + eta N(+R, sigma^2),
/// with eta = epsilon^2 sigma^2 / R^2 and I_R = [R/2 - c sigma, R/2 + c sigma].
struct LowerBoundInstance {
    double sigma = 1.0;
    double R = 10.0;
    double epsilon = 0.1;
    double eta = 1e-4;
    double c_interval = 1.0;

    static LowerBoundInstance make(double sigma, double R, double epsilon, double c_interval = 1.0);

    /// Requires R >= 8 sigma, epsilon in (0, 1), eta in [0, 1).
    void validate() const;

    double interval_lo() const { return R / 2.0 - c_interval * sigma; }
    double interval_hi() const { return R / 2.0 + c_interval * sigma; }
};

struct PosteriorVelocity {
    double velocity = 0.0;           // v_i(x, 1/2)
    double weight_background = 0.0;  // posterior of the N(0, sigma^2) target component
    double weight_shifted = 0.0;     // posterior of the N(+-R, sigma^2) component
};

/// v_i(x, 1/2) = 2 (x - E^(i)[X0 | X_{1/2} = x]), with component posteriors
/// evaluated in log space.
PosteriorVelocity mixture_posterior_velocity(const LowerBoundInstance& inst, int hypothesis, double x);

/// Density of pi1^(i) at x.
double target_density(const LowerBoundInstance& inst, int hypothesis, double x);

/// Density of X_{1/2} under hypothesis i.
double midpoint_density(const LowerBoundInstance& inst, int hypothesis, double x);

/// Density of pi_{*,1/2} = (p^(1)_{1/2} + p^(2)_{1/2}) / 2.
double averaged_midpoint_density(const LowerBoundInstance& inst, double x);

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    bool converged = false;
};

/// Absolute error target for all lower-bound quadratures.
inline constexpr double kQuadratureTolerance = 1e-8;

/// Adaptive Gauss-Kronrod integral of f over [a, b] split at the given breakpoints.
QuadratureResult integrate_adaptive(const std::function<double(double)>& f, std::span<const double> breakpoints);

/// TV(pi1^(1), pi1^(2)) = 1/2 int |p1 - p2| by adaptive quadrature.
QuadratureResult tv_distance_mixtures(const LowerBoundInstance& inst);

/// |v1 - v2|^2 integrated against pi_{*,1/2}.
QuadratureResult velocity_separation(const LowerBoundInstance& inst);

struct SeparationCheck {
    double min_abs_diff = 0.0;  // min over the I_R grid of |v1 - v2|
    double worst_x = 0.0;
    double ratio_to_R = 0.0;
    bool passes = false;        // min_abs_diff >= 0.9 R
};

SeparationCheck separation_on_interval(const LowerBoundInstance& inst, std::size_t grid_points = 201);

struct LeCamReport {
    std::size_t m = 0;
    double eta = 0.0;
    double tv_budget = 0.0;      // m * eta >= TV(P1^m, P2^m)
    bool within_budget = false;  // m * eta <= 1/2
    double separation = 0.0;     // |v1 - v2|^2_{L2(pi_{*,1/2})}
    double separation_over_eps2_sigma2 = 0.0;
    double target_floor = 0.0;   // epsilon^2 sigma^2
    double risk_floor = 0.0;     // separation (1 - m eta) / 8, two-point bound
};

LeCamReport lecam_budget(const LowerBoundInstance& inst, std::size_t m);

/// x,v1,v2,diff,density_pi_star rows on a uniform grid over [x_lo, x_hi].
void write_lowerbound_csv(std::ostream& out, const LowerBoundInstance& inst, double x_lo, double x_hi,
                          std::size_t points);

}  // namespace rflow
