#include "rflow/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rflow {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double gaussian_log_density(std::span<const double> x, std::span<const double> mean, double std) {
    const double d = static_cast<double>(x.size());
    const double sq = norm2_squared(sub(x, mean));
    return -0.5 * sq / (std * std) - d * std::log(std) - 0.5 * d * std::log(2.0 * std::numbers::pi);
}

}  // namespace

DistributionSpec DistributionSpec::gaussian(Vec mean, double std) {
    DistributionSpec s{GaussianSpec{std::move(mean), std}, std};
    s.validate();
    return s;
}

DistributionSpec DistributionSpec::mixture(std::vector<MixtureComponent> components) {
    if (components.empty()) throw std::invalid_argument("mixture: no components");
    // Conservative tail parameter: widest component plus largest mean offset.
    const std::size_t d = components.front().mean.size();
    Vec centre(d, 0.0);
    for (const auto& c : components) axpy(c.weight, c.mean, centre);
    double spread = 0.0;
    double widest = 0.0;
    for (const auto& c : components) {
        spread = std::max(spread, norm2(sub(c.mean, centre)));
        widest = std::max(widest, c.std);
    }
    DistributionSpec s{GaussianMixtureSpec{std::move(components)}, widest + spread};
    s.validate();
    return s;
}

DistributionSpec DistributionSpec::empirical(std::vector<Vec> points, double subgaussian_sigma) {
    DistributionSpec s{EmpiricalSpec{std::move(points)}, subgaussian_sigma};
    s.validate();
    return s;
}

DistributionSpec DistributionSpec::point_mass(Vec at) { return empirical({std::move(at)}, 1.0); }

std::size_t DistributionSpec::dim() const {
    return std::visit(Overloaded{
                          [](const GaussianSpec& g) { return g.mean.size(); },
                          [](const GaussianMixtureSpec& m) {
                              return m.components.empty() ? std::size_t{0} : m.components.front().mean.size();
                          },
                          [](const EmpiricalSpec& e) { return e.points.empty() ? std::size_t{0} : e.points.front().size(); },
                      },
                      kind);
}

bool DistributionSpec::has_density() const { return !std::holds_alternative<EmpiricalSpec>(kind); }

void DistributionSpec::validate() const {
    if (!(subgaussian_sigma > 0.0)) throw std::invalid_argument("distribution: subgaussian_sigma must be positive");
    const std::size_t d = dim();
    if (d == 0) throw std::invalid_argument("distribution: dimension must be positive");
    std::visit(Overloaded{
                   [&](const GaussianSpec& g) {
                       if (!(g.std > 0.0)) throw std::invalid_argument("gaussian: std must be positive");
                       require_finite(g.mean, "gaussian mean");
                   },
                   [&](const GaussianMixtureSpec& m) {
                       double total = 0.0;
                       for (const auto& c : m.components) {
                           if (!(c.weight > 0.0)) throw std::invalid_argument("mixture: weights must be positive");
                           if (!(c.std > 0.0)) throw std::invalid_argument("mixture: std must be positive");
                           if (c.mean.size() != d) throw std::invalid_argument("mixture: inconsistent dimensions");
                           require_finite(c.mean, "mixture mean");
                           total += c.weight;
                       }
                       if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("mixture: weights must sum to 1");
                   },
                   [&](const EmpiricalSpec& e) {
                       for (const auto& p : e.points) {
                           if (p.size() != d) throw std::invalid_argument("empirical: inconsistent dimensions");
                           require_finite(p, "empirical point");
                       }
                   },
               },
               kind);
}

Vec sample(const DistributionSpec& spec, RngStream& rng) {
    return std::visit(Overloaded{
                          [&](const GaussianSpec& g) { return gaussian_sample(rng, g.mean, g.std); },
                          [&](const GaussianMixtureSpec& m) {
                              double u = rng.uniform();
                              std::size_t k = 0;
                              for (; k + 1 < m.components.size(); ++k) {
                                  if (u < m.components[k].weight) break;
                                  u -= m.components[k].weight;
                              }
                              const auto& c = m.components[k];
                              return gaussian_sample(rng, c.mean, c.std);
                          },
                          [&](const EmpiricalSpec& e) { return e.points[rng.uniform_index(e.points.size())]; },
                      },
                      spec.kind);
}

double log_density(const DistributionSpec& spec, std::span<const double> x) {
    return std::visit(Overloaded{
                          [&](const GaussianSpec& g) { return gaussian_log_density(x, g.mean, g.std); },
                          [&](const GaussianMixtureSpec& m) {
                              std::vector<double> terms;
                              terms.reserve(m.components.size());
                              for (const auto& c : m.components)
                                  terms.push_back(std::log(c.weight) + gaussian_log_density(x, c.mean, c.std));
                              const double top = *std::max_element(terms.begin(), terms.end());
                              double s = 0.0;
                              for (double t : terms) s += std::exp(t - top);
                              return top + std::log(s);
                          },
                          [](const EmpiricalSpec&) -> double {
                              throw std::invalid_argument("log_density: empirical distribution has no density");
                          },
                      },
                      spec.kind);
}

Source::Source(DistributionSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

Vec Source::draw(RngStream& rng) {
    ++draws_;
    return sample(spec_, rng);
}

CoupledSample CoupledSample::make(Vec x0, Vec x1, double t) {
    if (x0.size() != x1.size()) throw std::invalid_argument("CoupledSample: endpoint dimensions differ");
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("CoupledSample: t outside [0, 1]");
    CoupledSample s;
    s.x_t = lerp(x0, x1, t);
    s.displacement = sub(x1, x0);
    s.x0 = std::move(x0);
    s.x1 = std::move(x1);
    s.t = t;
    return s;
}

std::vector<CoupledSample> draw_coupled(RngStream& rng, Source& pi0, Source& pi1, std::size_t n) {
    if (n == 0) throw std::invalid_argument("draw_coupled: n must be at least 1");
    if (pi0.spec().dim() != pi1.spec().dim()) throw std::invalid_argument("draw_coupled: dimension mismatch");
    std::vector<CoupledSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec x0 = pi0.draw(rng);
        Vec x1 = pi1.draw(rng);
        const double t = rng.uniform();
        out.push_back(CoupledSample::make(std::move(x0), std::move(x1), t));
    }
    return out;
}

std::vector<CoupledSample> draw_coupled(RngStream& rng, const DistributionSpec& pi0, const DistributionSpec& pi1,
                                        std::size_t n) {
    Source s0(pi0);
    Source s1(pi1);
    return draw_coupled(rng, s0, s1, n);
}

double displacement_sigma(const DistributionSpec& pi0, const DistributionSpec& pi1) {
    return std::hypot(pi0.subgaussian_sigma, pi1.subgaussian_sigma);
}

double truncation_level(double sigma, std::size_t n, double C, double c) {
    if (n < 2) throw std::invalid_argument("truncation_level: n must be at least 2");
    if (!(sigma > 0.0 && C > 0.0 && c > 0.0)) throw std::invalid_argument("truncation_level: sigma, C, c must be positive");
    const double nn = static_cast<double>(n);
    const double arg = std::log(2.0 * C * nn * nn);
    if (!(arg > 0.0)) throw std::invalid_argument("truncation_level: log(2 C n^2) must be positive");
    return sigma * std::sqrt(arg / c);
}

namespace {

TailEstimate binomial_estimate(std::size_t hits, std::size_t total) {
    TailEstimate e;
    e.samples = total;
    e.fraction = static_cast<double>(hits) / static_cast<double>(total);
    e.std_error = std::sqrt(e.fraction * (1.0 - e.fraction) / static_cast<double>(total));
    return e;
}

}  // namespace

TailEstimate tail_mass_outside(const DistributionSpec& pi0, const DistributionSpec& pi1, double M, std::size_t n_mc,
                               RngStream& rng) {
    if (!(M > 0.0)) throw std::invalid_argument("tail_mass_outside: M must be positive");
    if (n_mc == 0) throw std::invalid_argument("tail_mass_outside: n_mc must be positive");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        const Vec x0 = sample(pi0, rng);
        const Vec x1 = sample(pi1, rng);
        if (norm2(sub(x1, x0)) > M) ++hits;
    }
    return binomial_estimate(hits, n_mc);
}

TailEstimate tail_fraction(std::span<const CoupledSample> data, double M) {
    if (data.empty()) throw std::invalid_argument("tail_fraction: empty sample set");
    const auto hits = std::count_if(data.begin(), data.end(),
                                    [M](const CoupledSample& s) { return norm2(s.displacement) > M; });
    return binomial_estimate(static_cast<std::size_t>(hits), data.size());
}

std::vector<CoupledSample> truncate_to_event(std::span<const CoupledSample> data, double M) {
    std::vector<CoupledSample> kept;
    std::copy_if(data.begin(), data.end(), std::back_inserter(kept),
                 [M](const CoupledSample& s) { return norm2(s.displacement) <= M; });
    return kept;
}

}  // namespace rflow
