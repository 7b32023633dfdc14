#include "rflow/oracles.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace rflow {

void GaussianPairSpec::validate() const {
    if (mu0.size() != mu1.size() || mu0.empty()) throw std::invalid_argument("GaussianPairSpec: mean dimensions differ");
    if (!(std0 >= 0.0 && std1 >= 0.0)) throw std::invalid_argument("GaussianPairSpec: std must be non-negative");
}

Vec vstar_gaussian(const GaussianPairSpec& spec, std::span<const double> x, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("vstar_gaussian: t outside [0, 1]");
    if (x.size() != spec.mu0.size()) throw std::invalid_argument("vstar_gaussian: dimension mismatch");
    const double var0 = spec.std0 * spec.std0;
    const double var1 = spec.std1 * spec.std1;
    const double cov = t * var1 - (1.0 - t) * var0;
    const double var_t = (1.0 - t) * (1.0 - t) * var0 + t * t * var1;
    const double k = var_t > 0.0 ? cov / var_t : 0.0;
    Vec v(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double mean_t = (1.0 - t) * spec.mu0[i] + t * spec.mu1[i];
        v[i] = (spec.mu1[i] - spec.mu0[i]) + k * (x[i] - mean_t);
    }
    return v;
}

VelocityField vstar_field(GaussianPairSpec spec) {
    spec.validate();
    return [spec = std::move(spec)](std::span<const double> x, double t) { return vstar_gaussian(spec, x, t); };
}

MonteCarloEstimate velocity_l2_error(const VelocityField& field, const GaussianPairSpec& spec, std::size_t n_mc,
                                     RngStream& rng) {
    spec.validate();
    if (n_mc < 2) throw std::invalid_argument("velocity_l2_error: need at least 2 draws");
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        const Vec x0 = gaussian_sample(rng, spec.mu0, spec.std0);
        const Vec x1 = gaussian_sample(rng, spec.mu1, spec.std1);
        const double t = rng.uniform();
        const Vec xt = lerp(x0, x1, t);
        const double gap = norm2_squared(sub(field(xt, t), vstar_gaussian(spec, xt, t)));
        sum += gap;
        sum_sq += gap * gap;
    }
    const double m = static_cast<double>(n_mc);
    MonteCarloEstimate e;
    e.value = sum / m;
    e.std_error = std::sqrt(std::max(sum_sq / m - e.value * e.value, 0.0) / (m - 1.0));
    return e;
}

LowerBoundInstance LowerBoundInstance::make(double sigma, double R, double epsilon, double c_interval) {
    LowerBoundInstance inst;
    inst.sigma = sigma;
    inst.R = R;
    inst.epsilon = epsilon;
    inst.c_interval = c_interval;
    inst.eta = epsilon * epsilon * sigma * sigma / (R * R);
    inst.validate();
    return inst;
}

void LowerBoundInstance::validate() const {
    if (!(sigma > 0.0)) throw std::invalid_argument("lower bound: sigma must be positive");
    if (!(R >= 8.0 * sigma)) throw std::invalid_argument("lower bound: construction requires R >= 8 sigma");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("lower bound: epsilon must lie in (0, 1)");
    if (!(eta >= 0.0 && eta < 1.0)) throw std::invalid_argument("lower bound: eta must lie in [0, 1)");
    if (!(c_interval > 0.0)) throw std::invalid_argument("lower bound: c_interval must be positive");
}

namespace {

double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * d * d / var - 0.5 * std::log(2.0 * std::numbers::pi * var);
}

double shift_sign(int hypothesis) {
    if (hypothesis == 1) return -1.0;
    if (hypothesis == 2) return 1.0;
    throw std::invalid_argument("hypothesis must be 1 or 2");
}

}  // namespace

PosteriorVelocity mixture_posterior_velocity(const LowerBoundInstance& inst, int hypothesis, double x) {
    const double s = shift_sign(hypothesis);
    const double half_var = inst.sigma * inst.sigma / 2.0;
    const double log_bg = std::log1p(-inst.eta) + log_normal_pdf(x, 0.0, half_var);
    const double log_sh = std::log(inst.eta) + log_normal_pdf(x, s * inst.R / 2.0, half_var);

    PosteriorVelocity p;
    p.weight_background = 1.0 / (1.0 + std::exp(log_sh - log_bg));
    p.weight_shifted = 1.0 / (1.0 + std::exp(log_bg - log_sh));
    // Within one equal-variance Gaussian pair E[X0 | X_{1/2} = x] = x + (mu0 - mu1) / 2, so the
    // component velocity 2 (x - E[X0 | x]) is the mean displacement: 0 for the background, s R for
    // the shifted pair. Mixing those directly avoids cancellation against x.
    p.velocity = p.weight_shifted * (s * inst.R);
    return p;
}

double target_density(const LowerBoundInstance& inst, int hypothesis, double x) {
    const double s = shift_sign(hypothesis);
    const double var = inst.sigma * inst.sigma;
    return (1.0 - inst.eta) * std::exp(log_normal_pdf(x, 0.0, var)) +
           inst.eta * std::exp(log_normal_pdf(x, s * inst.R, var));
}

double midpoint_density(const LowerBoundInstance& inst, int hypothesis, double x) {
    const double s = shift_sign(hypothesis);
    const double half_var = inst.sigma * inst.sigma / 2.0;
    return (1.0 - inst.eta) * std::exp(log_normal_pdf(x, 0.0, half_var)) +
           inst.eta * std::exp(log_normal_pdf(x, s * inst.R / 2.0, half_var));
}

double averaged_midpoint_density(const LowerBoundInstance& inst, double x) {
    return 0.5 * (midpoint_density(inst, 1, x) + midpoint_density(inst, 2, x));
}

QuadratureResult integrate_adaptive(const std::function<double(double)>& f, std::span<const double> breakpoints) {
    if (breakpoints.size() < 2) throw std::invalid_argument("integrate_adaptive: need at least two breakpoints");
    using Kronrod = boost::math::quadrature::gauss_kronrod<double, 61>;
    QuadratureResult r;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        double err = 0.0;
        r.value += Kronrod::integrate(f, breakpoints[i], breakpoints[i + 1], 20, 1e-13, &err);
        r.error_estimate += err;
    }
    r.converged = std::isfinite(r.value) && r.error_estimate <= kQuadratureTolerance;
    return r;
}

QuadratureResult tv_distance_mixtures(const LowerBoundInstance& inst) {
    const double reach = inst.R + 40.0 * inst.sigma;
    const std::vector<double> breaks{-reach, -inst.R, 0.0, inst.R, reach};
    auto integrand = [&](double x) {
        return 0.5 * std::abs(target_density(inst, 1, x) - target_density(inst, 2, x));
    };
    return integrate_adaptive(integrand, breaks);
}

QuadratureResult velocity_separation(const LowerBoundInstance& inst) {
    const double reach = inst.R / 2.0 + 40.0 * inst.sigma;
    const std::vector<double> breaks{-reach, -inst.R / 2.0, 0.0, inst.R / 2.0, reach};
    auto integrand = [&](double x) {
        const double diff = mixture_posterior_velocity(inst, 1, x).velocity - mixture_posterior_velocity(inst, 2, x).velocity;
        return diff * diff * averaged_midpoint_density(inst, x);
    };
    return integrate_adaptive(integrand, breaks);
}

SeparationCheck separation_on_interval(const LowerBoundInstance& inst, std::size_t grid_points) {
    if (grid_points < 2) throw std::invalid_argument("separation_on_interval: need at least 2 grid points");
    SeparationCheck check;
    check.min_abs_diff = std::numeric_limits<double>::infinity();
    const double lo = inst.interval_lo();
    const double hi = inst.interval_hi();
    for (std::size_t i = 0; i < grid_points; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
        const double diff = std::abs(mixture_posterior_velocity(inst, 1, x).velocity -
                                     mixture_posterior_velocity(inst, 2, x).velocity);
        if (diff < check.min_abs_diff) {
            check.min_abs_diff = diff;
            check.worst_x = x;
        }
    }
    check.ratio_to_R = check.min_abs_diff / inst.R;
    check.passes = check.min_abs_diff >= 0.9 * inst.R;
    return check;
}

LeCamReport lecam_budget(const LowerBoundInstance& inst, std::size_t m) {
    if (m == 0) throw std::invalid_argument("lecam_budget: m must be at least 1");
    LeCamReport r;
    r.m = m;
    r.eta = inst.eta;
    r.tv_budget = static_cast<double>(m) * inst.eta;
    r.within_budget = r.tv_budget <= 0.5;
    r.separation = velocity_separation(inst).value;
    r.target_floor = inst.epsilon * inst.epsilon * inst.sigma * inst.sigma;
    r.separation_over_eps2_sigma2 = r.separation / r.target_floor;
    r.risk_floor = r.separation * std::max(0.0, 1.0 - r.tv_budget) / 8.0;
    return r;
}

void write_lowerbound_csv(std::ostream& out, const LowerBoundInstance& inst, double x_lo, double x_hi,
                          std::size_t points) {
    if (points < 2 || !(x_hi > x_lo)) throw std::invalid_argument("write_lowerbound_csv: bad grid");
    out << "x,v1,v2,diff,density_pi_star\n";
    out.precision(17);
    for (std::size_t i = 0; i < points; ++i) {
        const double x = x_lo + (x_hi - x_lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        const double v1 = mixture_posterior_velocity(inst, 1, x).velocity;
        const double v2 = mixture_posterior_velocity(inst, 2, x).velocity;
        out << x << ',' << v1 << ',' << v2 << ',' << (v1 - v2) << ',' << averaged_midpoint_density(inst, x) << '\n';
    }
}

}  // namespace rflow
