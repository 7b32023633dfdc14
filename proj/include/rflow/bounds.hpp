#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rflow/distributions.hpp"
#include "rflow/linalg.hpp"
#include "rflow/network.hpp"
#include "rflow/rng.hpp"

namespace rflow {

struct BoundError : NumericError {
    using NumericError::NumericError;
};

/// Constants of the bounded network class entering the covering number.
struct ArchConstants {
    double b = 1.0;
    double V = 2.0;
    double L_phi = 1.0;
    std::size_t depth = 2;

    double lv() const { return L_phi * V; }
    void validate() const;
};

struct BoundInputs {
    std::size_t P = 10;
    double n = 1e4;
    double B = 1.0;
    double L_ell = 1.0;
    double mu = 1.0;
    double L_theta = 1.0;
    ArchConstants arch;
    double C_univ = 1.0;     // the unpinned universal constant inside log(C n L_ell^2 / P)
    double x_conf = 1.0;     // confidence exponent for the excess-risk bound
    double epsilon = 0.1;
    double delta = 0.1;
    double eps_approx = 0.0; // user-supplied approximation error, reported only
    double sigma = 1.0;      // sub-Gaussian parameter for truncation
    TailConstants tail;

    void validate() const;

    /// Inputs derived from an architecture: L_theta and L_ell from the
    /// Lipschitz report, B = 2 L_theta^2 / mu.
    static BoundInputs from_architecture(const NetArchitecture& arch, double mu, double n, double M_disp);
};

inline constexpr std::int64_t kLocalRadConstant = 705;
inline constexpr std::int64_t kFixedPointConstant = 288;
inline constexpr std::int64_t kCombinedConstant = 203040;
static_assert(kLocalRadConstant * kFixedPointConstant == kCombinedConstant);

/// 2 L_theta^2 / mu.
double bernstein_B(double L_theta, double mu);

/// 4 e b P (L_phi V)^D / (L_phi V - 1).
double covering_constant_A(std::size_t P, const ArchConstants& arch);

/// P log(4 e m b P (L_phi V)^D / (eps (L_phi V - 1))). Requires 0 < eps <= 2b, L_phi V > 1.
double log_covering(std::size_t P, double m, double eps, const ArchConstants& arch);

struct DudleyValue {
    double value = 0.0;         // prefactor * log_term, +inf when vacuous
    double prefactor = 0.0;     // 12 sqrt(P r) / (L_ell sqrt(n))
    double log_argument = 0.0;  // A n L_ell / sqrt(r)
    double log_term = 0.0;      // sqrt(log(argument)) + sqrt(pi)/2
    bool vacuous = false;       // log argument <= 1
    bool frozen_log = false;    // log_term was supplied by the caller
};

/// 12 sqrt(P r) / (L_ell sqrt(n)) (sqrt(log(A n L_ell / sqrt(r))) + sqrt(pi)/2).
/// With `frozen_log_term` the log factor is not recomputed.
DudleyValue dudley_local_rad(const BoundInputs& in, double r, std::optional<double> frozen_log_term = std::nullopt);

/// psi(r) = 12 B sqrt(P r / n) (sqrt(log(A n L_ell / sqrt(r))) + sqrt(pi)/2).
double psi(const BoundInputs& in, double r);

/// (288 B^2 P / n) (log(C n L_ell^2 / P) + 1).
double r_star_closed_form(const BoundInputs& in);

struct FixedPoint {
    std::function<double(double)> psi;
    double r_star = 0.0;  // closed form
    double r_root = 0.0;  // numerical root of r = psi(r)
    int iterations = 0;

    double ratio() const { return r_root / r_star; }
};

/// Bisection on log r to relative tolerance 1e-10. Throws BoundError when no
/// bracket exists inside the non-vacuous range.
FixedPoint psi_and_fixed_point(const BoundInputs& in);

struct ExcessRiskBound {
    double value = 0.0;            // 705 r / B + (11 L_ell + 2B) x / n
    double localized_term = 0.0;   // 705 r / B
    double confidence_term = 0.0;  // (11 L_ell + 2B) x / n
    double combined_leading = 0.0; // 203040 B P / n (log(C n L_ell^2 / P) + 1)
    double cross_check_rel_error = 0.0;
    bool cross_check_ok = false;   // 705 r*_closed / B matches combined_leading to 1e-10
};

ExcessRiskBound excess_risk_bound(const BoundInputs& in, double r_star);

/// B * excess_risk_bound at sample size n with the closed-form r* and confidence x.
double stat_bound_at(const BoundInputs& in, double n, double x);

struct SampleSizeReport {
    double stat = 0.0;           // at in.n with x = log(2/delta)
    double x_stat = 0.0;         // log(2/delta)
    double x_sample = 0.0;       // log(6/delta)
    double budget = 0.0;         // epsilon^2 / 9
    std::uint64_t n_required = 0;
    bool satisfiable = false;
    bool side_condition_ok = false;  // 2n > e^x at in.n
    std::string message;
};

/// Smallest n with stat_bound_at(n, log(6/delta)) <= epsilon^2/9, by doubling
/// then integer bisection over the range where the bound is decreasing.
SampleSizeReport stat_bound_and_sample_size(const BoundInputs& in);

struct TruncationReport {
    double n = 0.0;
    double sigma = 0.0;
    double M = 0.0;
    double delta_n = 0.0;           // 1 / (2 n^2)
    double bias_budget = 0.0;       // (M^2 + sigma^2) delta_n
    double bad_event_budget = 0.0;  // n delta_n = 1 / (2n)
};

TruncationReport truncation_bias_report(const BoundInputs& in);

struct BoundReport {
    BoundInputs inputs;
    double B = 0.0;
    double covering_eps = 0.0;
    double log_covering = 0.0;
    DudleyValue dudley;
    std::vector<std::pair<double, double>> psi_grid;  // (r, psi(r))
    double r_star = 0.0;
    double r_root = 0.0;
    ExcessRiskBound excess;
    SampleSizeReport sample;
    TruncationReport truncation;
    bool constant_identity = false;
    bool side_condition_ok = false;
};

/// Every formula at once. The covering number is evaluated at m = n and at the
/// Dudley upper limit sqrt(r*) / L_ell, clamped to (0, 2b].
BoundReport evaluate_bounds(const BoundInputs& in);

struct RademacherOptions {
    std::size_t n_signs = 8;
    std::size_t n_restarts = 3;
    std::size_t ascent_steps = 60;
    double step_size = 0.2;  // initial step as a fraction of V
    std::size_t jobs = 1;
};

struct RademacherEstimate {
    double mean = 0.0;  // lower estimate of the localized empirical Rademacher complexity
    double std_dev = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t n_signs = 0;
    std::size_t n_restarts = 0;
    std::string label;
};

/// Monte-Carlo lower estimate of
///   E_sigma sup { (1/(n d)) sum_ik sigma_ik (f_theta - f_center)_k(z_i) :
///                 L_ell^2 (1/(n d)) sum_i |f_theta - f_center|^2(z_i) <= r }
/// over the constrained class of `center`'s architecture, by projected gradient
/// ascent with restarts. Points are (x_t, t) of the samples. Instances are
/// limited to P <= 200 and n <= 512.
RademacherEstimate empirical_local_rademacher(const VelocityNet& center, std::span<const CoupledSample> data,
                                              double r, double L_ell, const RademacherOptions& options,
                                              RngStream& rng);

}  // namespace rflow
