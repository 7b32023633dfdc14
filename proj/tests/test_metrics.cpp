#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rflow/metrics.hpp"
#include "rflow/oracles.hpp"

using namespace rflow;

namespace {

// Minimum over all n! matchings of the mean squared distance.
double brute_force_w2(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    std::vector<std::size_t> perm(a.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    double best = INFINITY;
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) cost += norm2_squared(sub(a[i], b[perm[i]]));
        best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::sqrt(best / static_cast<double>(a.size()));
}

std::vector<Vec> random_points(std::size_t n, std::size_t d, RngStream& rng) {
    std::vector<Vec> pts(n, Vec(d));
    for (auto& p : pts)
        for (double& x : p) x = rng.normal();
    return pts;
}

std::vector<Vec> as_points(const std::vector<double>& v) {
    std::vector<Vec> out;
    for (double x : v) out.push_back({x});
    return out;
}

}  // namespace

TEST_CASE("1-D W2 examples") {
    CHECK(w2_empirical_1d(std::vector<double>{1.0, 2.0, 3.0}, std::vector<double>{3.0, 1.0, 2.0}) == 0.0);
    CHECK(w2_empirical_1d(std::vector<double>{0.0}, std::vector<double>{3.0}) == 3.0);
    CHECK_THROWS(w2_empirical_1d(std::vector<double>{}, std::vector<double>{}));
    CHECK_THROWS(w2_empirical_1d(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}));
}

TEST_CASE("1-D W2 matches factorial brute force and the assignment solver") {
    RngStream rng(41, 0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> a(8), b(8);
        for (double& x : a) x = rng.normal();
        for (double& x : b) x = 2.0 * rng.normal();
        const double sorted = w2_empirical_1d(a, b);
        CHECK(sorted == doctest::Approx(brute_force_w2(as_points(a), as_points(b))).epsilon(1e-12));
        CHECK(sorted == doctest::Approx(w2_empirical_assignment(as_points(a), as_points(b))).epsilon(1e-12));
    }
}

TEST_CASE("assignment W2 examples") {
    RngStream rng(42, 0);
    const auto a = random_points(20, 3, rng);
    auto b = a;
    rng.shuffle(b);
    CHECK(w2_empirical_assignment(a, b) == doctest::Approx(0.0).scale(1e-12));
    const Vec shift{1.0, -2.0, 2.0};
    std::vector<Vec> moved;
    for (const auto& p : a) moved.push_back(add(p, shift));
    CHECK(w2_empirical_assignment(a, moved) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK_THROWS(w2_empirical_assignment(random_points(513, 1, rng), random_points(513, 1, rng)));
}

TEST_CASE("assignment solver is optimal on 7-point 2-D instances") {
    RngStream rng(43, 0);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_points(7, 2, rng);
        const auto b = random_points(7, 2, rng);
        CHECK(w2_empirical_assignment(a, b) == doctest::Approx(brute_force_w2(a, b)).epsilon(1e-12));
    }
}

TEST_CASE("assignment returns a permutation whose cost matches") {
    RngStream rng(44, 0);
    Matrix cost(6, 6);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) cost(i, j) = rng.uniform();
    const auto sol = solve_assignment(cost);
    std::vector<std::size_t> cols = sol.row_to_col;
    std::sort(cols.begin(), cols.end());
    for (std::size_t j = 0; j < 6; ++j) CHECK(cols[j] == j);
    double total = 0.0;
    for (std::size_t i = 0; i < 6; ++i) total += cost(i, sol.row_to_col[i]);
    CHECK(total == doctest::Approx(sol.cost).epsilon(1e-14));
    CHECK_THROWS(solve_assignment(Matrix(2, 3)));
}

TEST_CASE("W2 is a pseudometric on point sets") {
    RngStream rng(45, 0);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_points(12, 2, rng);
        const auto b = random_points(12, 2, rng);
        const auto c = random_points(12, 2, rng);
        const double ab = w2_empirical_assignment(a, b);
        CHECK(ab == doctest::Approx(w2_empirical_assignment(b, a)).epsilon(1e-14));
        CHECK(w2_empirical_assignment(a, c) <= ab + w2_empirical_assignment(b, c) + 1e-10);
    }
    std::vector<double> x{1.0, 2.0, 3.0}, y{1.0, 2.0, 3.5};
    CHECK(w2_empirical_1d(x, y) > 0.0);
}

TEST_CASE("excess risk") {
    RngStream rng(46, 0);
    const auto data = draw_coupled(rng, DistributionSpec::gaussian({0.0}, 1.0), DistributionSpec::gaussian({2.0}, 1.0), 500);
    const VelocityField zero = [](std::span<const double> x, double) { return Vec(x.size(), 0.0); };
    const VelocityField mu = [](std::span<const double>, double) { return Vec{2.0}; };
    CHECK(excess_risk(mu, mu, data).value == 0.0);
    const auto e = excess_risk(zero, mu, data);
    CHECK(e.value == doctest::Approx(4.0));
    CHECK(e.std_error == doctest::Approx(0.0).scale(1e-12));
    CHECK_THROWS(excess_risk(zero, mu, std::span<const CoupledSample>{}));
}

TEST_CASE("excess risk against the oracle agrees with the velocity L2 error") {
    const GaussianPairSpec pair{{0.0}, {2.0}, 1.0, 1.0};
    const VelocityField approx = [](std::span<const double> x, double t) { return Vec{2.0 + 0.3 * std::sin(x[0]) * t}; };
    RngStream rng(47, 0);
    const auto holdout = draw_coupled(rng, DistributionSpec::gaussian({0.0}, 1.0), DistributionSpec::gaussian({2.0}, 1.0), 20000);
    const auto a = excess_risk(approx, vstar_field(pair), holdout);
    const auto b = velocity_l2_error(approx, pair, 20000, rng);
    CHECK(std::abs(a.value - b.value) <= 2.0 * std::hypot(a.std_error, b.std_error));
}

TEST_CASE("rate fits") {
    std::vector<std::pair<double, double>> inv, root, logged;
    for (double n = 128; n <= 8192; n *= 2) {
        inv.emplace_back(n, 7.0 / n);
        root.emplace_back(n, 3.0 / std::sqrt(n));
        logged.emplace_back(n, std::log(n) / n);
    }
    const auto f = fit_rate(inv);
    CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(f.intercept == doctest::Approx(std::log(7.0)).epsilon(1e-10));
    CHECK(f.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit_rate(root).slope == doctest::Approx(-0.5).epsilon(1e-10));
    const double s = fit_rate(logged).slope;
    CHECK(s >= -1.05);
    CHECK(s <= -0.80);

    CHECK_THROWS(fit_rate(std::vector<std::pair<double, double>>{{1, 1}, {2, 1}, {3, 1}}));
    CHECK_THROWS(fit_rate(std::vector<std::pair<double, double>>{{1, 1}, {2, 1}, {3, 1}, {4, 0}}));
}
