#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "rflow/oracles.hpp"
#include "rflow/sampler.hpp"

using namespace rflow;

namespace {

struct Bin {
    double sum_x = 0.0;
    double sum_y = 0.0;
    double sum_y2 = 0.0;
    std::size_t hits = 0;
};

// Checks v* against binned Monte-Carlo conditional means of the displacement.
// Within a bin, the mean of a linear field equals the field at the mean of x.
std::size_t binned_failures(const GaussianPairSpec& pair, double t, std::size_t draws, RngStream& rng,
                            std::size_t& populated) {
    std::map<long, Bin> bins;
    const double width = 0.1;
    for (std::size_t i = 0; i < draws; ++i) {
        const double x0 = pair.mu0[0] + pair.std0 * rng.normal();
        const double x1 = pair.mu1[0] + pair.std1 * rng.normal();
        const double xt = (1.0 - t) * x0 + t * x1;
        auto& b = bins[std::lround(std::floor(xt / width))];
        b.sum_x += xt;
        b.sum_y += x1 - x0;
        b.sum_y2 += (x1 - x0) * (x1 - x0);
        ++b.hits;
    }
    std::size_t failures = 0;
    populated = 0;
    for (const auto& [key, b] : bins) {
        if (b.hits < 1000) continue;
        ++populated;
        const double n = static_cast<double>(b.hits);
        const double mean = b.sum_y / n;
        const double se = std::sqrt((b.sum_y2 / n - mean * mean) / (n - 1.0));
        const double predicted = vstar_gaussian(pair, Vec{b.sum_x / n}, t)[0];
        if (std::abs(mean - predicted) > 3.0 * se) ++failures;
    }
    return failures;
}

// Smallest separation / (eps^2 sigma^2) over eps in {0.05, 0.1, 0.2, 0.5} and R in {8, 10, 16, 32}
// (0.87914 at eps = 0.05, R = 8), rounded down.
constexpr double kSeparationRatioFloor = 0.879;

}  // namespace

TEST_CASE("v* closed-form examples") {
    const GaussianPairSpec shifted{{0.0}, {3.0}, 1.0, 1.0};
    for (double x : {-5.0, 0.0, 1.5, 40.0}) CHECK(vstar_gaussian(shifted, Vec{x}, 0.5)[0] == doctest::Approx(3.0));

    const GaussianPairSpec centred{{0.0}, {0.0}, 1.0, 1.0};
    for (double t : {0.0, 0.1, 0.3, 0.7, 1.0})
        CHECK(vstar_gaussian(centred, Vec{2.0}, t)[0] ==
              doctest::Approx((2.0 * t - 1.0) / ((1.0 - t) * (1.0 - t) + t * t) * 2.0));

    CHECK_THROWS(vstar_gaussian(shifted, Vec{0.0}, 1.1));
    CHECK_THROWS(vstar_gaussian(shifted, Vec{0.0}, -0.1));
    CHECK_THROWS((GaussianPairSpec{{0.0}, {0.0}, -1.0, 1.0}.validate()));
}

TEST_CASE("v* approaches the constant displacement as the spread vanishes") {
    const GaussianPairSpec narrow{{1.0, -1.0}, {2.0, 3.0}, 1e-9, 1e-9};
    const Vec v = vstar_gaussian(narrow, Vec{1.5, 1.0}, 0.5);
    CHECK(v[0] == doctest::Approx(1.0));
    CHECK(v[1] == doctest::Approx(4.0));
}

TEST_CASE("v* matches binned Monte-Carlo conditional means") {
    RngStream rng(21, 0);
    for (const auto& pair : {GaussianPairSpec{{0.0}, {0.0}, 1.0, 1.0}, GaussianPairSpec{{-1.0}, {2.0}, 1.0, 1.0},
                             GaussianPairSpec{{0.0}, {1.0}, 0.5, 2.0}}) {
        for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) {
            std::size_t populated = 0;
            CHECK(binned_failures(pair, t, 400000, rng, populated) <= 1);
            CHECK(populated >= 10);
        }
    }
}

TEST_CASE("integrating v* transports the source onto the target") {
    const GaussianPairSpec pair{{0.0}, {2.0}, 1.0, 1.0};
    const VelocityField field = vstar_field(pair);
    RngStream rng(22, 0);
    const std::size_t n = 20000;
    std::vector<double> pushed, target;
    for (std::size_t i = 0; i < n; ++i) {
        pushed.push_back(euler_terminal(field, Vec{rng.normal()}, 1000)[0]);
        target.push_back(2.0 + rng.normal());
    }
    CHECK(w2_empirical_1d(pushed, target) < 5e-2);
}

TEST_CASE("velocity L2 error") {
    const GaussianPairSpec pair{{0.0, 1.0}, {2.0, -1.0}, 1.0, 1.5};
    RngStream rng(23, 0);
    const auto self = velocity_l2_error(vstar_field(pair), pair, 1000, rng);
    CHECK(self.value < 1e-10);
    const Vec offset{0.3, -0.4};
    const VelocityField shifted = [&](std::span<const double> x, double t) {
        return add(vstar_gaussian(pair, x, t), offset);
    };
    const auto off = velocity_l2_error(shifted, pair, 1000, rng);
    CHECK(off.value == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("lower-bound instance construction") {
    const auto inst = LowerBoundInstance::make(1.0, 10.0, 0.1);
    CHECK(inst.eta == doctest::Approx(1e-4).epsilon(1e-14));
    CHECK(LowerBoundInstance::make(1.0, 20.0, 0.1).eta == doctest::Approx(inst.eta / 4.0).epsilon(1e-14));
    CHECK(inst.interval_lo() == 4.0);
    CHECK(inst.interval_hi() == 6.0);
    CHECK_THROWS(LowerBoundInstance::make(1.0, 7.9, 0.1));
    CHECK_THROWS(LowerBoundInstance::make(1.0, 10.0, 1.0));
}

TEST_CASE("posterior velocities") {
    for (double R : {8.0, 10.0, 16.0, 40.0}) {
        const auto inst = LowerBoundInstance::make(1.0, R, 0.1);
        for (double x = -R - 10.0; x <= R + 10.0; x += 0.37) {
            for (int h : {1, 2}) {
                const auto p = mixture_posterior_velocity(inst, h, x);
                CHECK(std::isfinite(p.velocity));
                CHECK((p.weight_background >= 0.0 && p.weight_background <= 1.0));
                CHECK((p.weight_shifted >= 0.0 && p.weight_shifted <= 1.0));
                CHECK(std::abs(p.weight_background + p.weight_shifted - 1.0) <= 1e-12);
            }
            CHECK(mixture_posterior_velocity(inst, 2, x).velocity ==
                  doctest::Approx(-mixture_posterior_velocity(inst, 1, -x).velocity).epsilon(1e-12).scale(1e-12));
        }
    }
    CHECK_THROWS(mixture_posterior_velocity(LowerBoundInstance::make(1.0, 10.0, 0.1), 3, 0.0));
}

TEST_CASE("posterior velocity vanishes as the shifted weight vanishes") {
    auto inst = LowerBoundInstance::make(1.0, 10.0, 0.1);
    inst.eta = 0.0;
    for (double x : {-3.0, 0.0, 2.0, 5.0}) CHECK(mixture_posterior_velocity(inst, 1, x).velocity == 0.0);
    inst.eta = 1e-30;
    for (double x : {-3.0, 0.0, 2.0}) CHECK(std::abs(mixture_posterior_velocity(inst, 1, x).velocity) < 1e-20);
}

TEST_CASE("posterior velocity against a direct density-ratio oracle") {
    // v_i(x) = 2 (x - E[X0 | Z = x]); the shifted pair has E[X0 | Z] = x -+ R/2.
    const auto inst = LowerBoundInstance::make(1.0, 10.0, 0.1);
    for (double x : {-1.0, 0.0, 2.0, 4.5, 5.0, 6.0}) {
        const double var = 0.5;
        const double bg = (1.0 - inst.eta) * std::exp(-x * x / (2 * var));
        const double sh = inst.eta * std::exp(-(x - 5.0) * (x - 5.0) / (2 * var));
        const double w = sh / (bg + sh);
        const double expected = 2.0 * (w * 5.0);  // E[X0 | Z] = x - w R / 2
        CHECK(mixture_posterior_velocity(inst, 2, x).velocity == doctest::Approx(expected).epsilon(1e-12).scale(1e-14));
    }
}

TEST_CASE("densities integrate to one") {
    const auto inst = LowerBoundInstance::make(1.0, 10.0, 0.2);
    const std::vector<double> breaks{-60.0, -10.0, 0.0, 10.0, 60.0};
    for (int h : {1, 2}) {
        CHECK(integrate_adaptive([&](double x) { return target_density(inst, h, x); }, breaks).value ==
              doctest::Approx(1.0).epsilon(1e-10));
        CHECK(integrate_adaptive([&](double x) { return midpoint_density(inst, h, x); }, breaks).value ==
              doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(integrate_adaptive([&](double x) { return averaged_midpoint_density(inst, x); }, breaks).value ==
          doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("quadrature on known integrals") {
    const std::vector<double> breaks{0.0, 1.0, 2.0};
    const auto r = integrate_adaptive([](double x) { return std::exp(-x); }, breaks);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(1.0 - std::exp(-2.0)).epsilon(1e-14));
    const auto kink = integrate_adaptive([](double x) { return std::abs(x - 1.0); }, breaks);
    CHECK(kink.value == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("total variation stays below eta") {
    auto zero = LowerBoundInstance::make(1.0, 10.0, 0.1);
    zero.eta = 0.0;
    CHECK(tv_distance_mixtures(zero).value == 0.0);

    const auto base = LowerBoundInstance::make(1.0, 10.0, 0.1);
    const auto tv = tv_distance_mixtures(base);
    CHECK(tv.converged);
    CHECK(tv.value <= base.eta + kQuadratureTolerance);
    CHECK(tv.value == doctest::Approx(base.eta).epsilon(1e-6));  // components barely overlap

    double prev = -1.0;
    for (double eps : {0.01, 0.05, 0.1, 0.3, 0.5, 0.9}) {
        for (double R : {8.0, 12.0, 16.0}) {
            const auto inst = LowerBoundInstance::make(1.0, R, eps);
            const auto q = tv_distance_mixtures(inst);
            CHECK(q.converged);
            CHECK(q.value <= inst.eta + kQuadratureTolerance);
        }
        const auto q = tv_distance_mixtures(LowerBoundInstance::make(1.0, 10.0, eps));
        CHECK(q.value >= prev);
        prev = q.value;
    }
}

TEST_CASE("velocity separation on the interval") {
    CHECK(separation_on_interval(LowerBoundInstance::make(1.0, 10.0, 0.1)).passes);
    CHECK(separation_on_interval(LowerBoundInstance::make(1.0, 16.0, 0.1)).passes);
    // At R = 8 sigma the interval edge sits too close to the background for the
    // shifted posterior to dominate at c = 1; a narrower interval restores it.
    const auto tight = separation_on_interval(LowerBoundInstance::make(1.0, 8.0, 0.1));
    CHECK(tight.ratio_to_R < 0.9);
    CHECK(separation_on_interval(LowerBoundInstance::make(1.0, 8.0, 0.1, 0.5)).passes);
}

TEST_CASE("Le Cam budget") {
    const auto inst = LowerBoundInstance::make(1.0, 10.0, 0.1);
    const auto m = static_cast<std::size_t>(std::floor(1.0 / (2.0 * inst.eta)));
    const auto report = lecam_budget(inst, m);
    CHECK(report.tv_budget <= 0.5);
    CHECK(report.within_budget);
    CHECK_FALSE(lecam_budget(inst, m + 1).within_budget);
    CHECK(report.risk_floor == doctest::Approx(report.separation * (1.0 - report.tv_budget) / 8.0));
    CHECK(report.target_floor == doctest::Approx(0.01));

    // separation / (eps^2 sigma^2) measured once by quadrature across the grid and frozen
    double smallest = INFINITY;
    for (double eps : {0.05, 0.1, 0.2, 0.5})
        for (double R : {8.0, 10.0, 16.0, 32.0})
            smallest = std::min(smallest, lecam_budget(LowerBoundInstance::make(1.0, R, eps), 1).separation_over_eps2_sigma2);
    CHECK(smallest >= kSeparationRatioFloor);
}

TEST_CASE("lower-bound csv") {
    std::ostringstream out;
    write_lowerbound_csv(out, LowerBoundInstance::make(1.0, 10.0, 0.1), -15.0, 15.0, 7);
    const std::string s = out.str();
    CHECK(s.rfind("x,v1,v2,diff,density_pi_star\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 8);
    CHECK_THROWS(write_lowerbound_csv(out, LowerBoundInstance::make(1.0, 10.0, 0.1), 1.0, 0.0, 7));
}
