#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "rflow/linalg.hpp"
#include "rflow/rng.hpp"

namespace rflow {

struct GaussianSpec {
    Vec mean;
    double std = 1.0;
};

struct MixtureComponent {
    double weight = 1.0;
    Vec mean;
    double std = 1.0;
};

struct GaussianMixtureSpec {
    std::vector<MixtureComponent> components;
};

/// Finite point cloud, sampled uniformly with replacement.
struct EmpiricalSpec {
    std::vector<Vec> points;
};

/// Declarative source or target distribution plus its sub-Gaussian tail parameter.
struct DistributionSpec {
    std::variant<GaussianSpec, GaussianMixtureSpec, EmpiricalSpec> kind;
    double subgaussian_sigma = 1.0;

    static DistributionSpec gaussian(Vec mean, double std);
    static DistributionSpec mixture(std::vector<MixtureComponent> components);
    static DistributionSpec empirical(std::vector<Vec> points, double subgaussian_sigma);
    static DistributionSpec point_mass(Vec at);

    std::size_t dim() const;
    bool has_density() const;

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;
};

Vec sample(const DistributionSpec& spec, RngStream& rng);

/// Log density; only Gaussian and mixture kinds have one.
double log_density(const DistributionSpec& spec, std::span<const double> x);

/// Sampling handle that counts how many draws were taken from a distribution.
class Source {
public:
    explicit Source(DistributionSpec spec);

    Vec draw(RngStream& rng);
    std::size_t draws() const { return draws_; }
    const DistributionSpec& spec() const { return spec_; }

private:
    DistributionSpec spec_;
    std::size_t draws_ = 0;
};

/// One training triple with its interpolant X_t = (1-t) X0 + t X1 and displacement X1 - X0.
struct CoupledSample {
    Vec x0;
    Vec x1;
    double t = 0.0;
    Vec x_t;
    Vec displacement;

    static CoupledSample make(Vec x0, Vec x1, double t);
};

/// n i.i.d. triples from the independent coupling pi0 x pi1 with t ~ U[0,1].
std::vector<CoupledSample> draw_coupled(RngStream& rng, Source& pi0, Source& pi1, std::size_t n);
std::vector<CoupledSample> draw_coupled(RngStream& rng, const DistributionSpec& pi0,
                                        const DistributionSpec& pi1, std::size_t n);

/// Universal constants of the tail bound P(|X1 - X0| > M) <= C exp(-c M^2 / sigma^2).
struct TailConstants {
    double C = 2.0;
    double c = 0.5;
};

/// sigma of X1 - X0 for independent endpoints: sqrt(sigma0^2 + sigma1^2).
double displacement_sigma(const DistributionSpec& pi0, const DistributionSpec& pi1);

/// M = sigma * sqrt(log(2 C n^2) / c). Rejects n < 2.
double truncation_level(double sigma, std::size_t n, double C, double c);

struct TailEstimate {
    double fraction = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
};

/// Monte-Carlo estimate of P(|X1 - X0| > M) under the independent coupling.
TailEstimate tail_mass_outside(const DistributionSpec& pi0, const DistributionSpec& pi1, double M,
                               std::size_t n_mc, RngStream& rng);

/// Fraction of a fixed sample set with |displacement| > M.
TailEstimate tail_fraction(std::span<const CoupledSample> data, double M);

/// Keeps the samples on the event |X1 - X0| <= M.
std::vector<CoupledSample> truncate_to_event(std::span<const CoupledSample> data, double M);

}  // namespace rflow
