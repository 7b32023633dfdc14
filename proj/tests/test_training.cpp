#include <doctest.h>

#include <cmath>
#include <sstream>

#include "rflow/training.hpp"

using namespace rflow;

namespace {

NetArchitecture arch_1d(std::vector<std::size_t> hidden, double V) {
    NetArchitecture a;
    a.hidden = std::move(hidden);
    a.V = V;
    return a;
}

// Kahan-compensated accumulation of the same loss, used as an independent oracle.
double kahan_loss(const VelocityNet& net, std::span<const CoupledSample> data) {
    double sum = 0.0, comp = 0.0;
    for (const auto& s : data) {
        const Vec v = net.forward(s.x_t, s.t);
        double sq = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) sq += (v[k] - s.displacement[k]) * (v[k] - s.displacement[k]);
        const double y = sq - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    return sum / static_cast<double>(data.size());
}

TrainTrace quadratic_trace(double a, std::size_t steps) {
    // Gradient descent on 1/2 a |theta|^2 starting at theta = (1, 2).
    TrainTrace trace;
    std::vector<double> theta{1.0, 2.0};
    for (std::size_t k = 0; k < steps; ++k) {
        TrainStep s;
        s.loss = 0.5 * a * norm2_squared(theta);
        s.grad_norm = a * norm2(theta);
        s.eta = 0.1 / a;
        trace.steps.push_back(s);
        for (double& x : theta) x -= s.eta * a * x;
    }
    return trace;
}

}  // namespace

TEST_CASE("config validation") {
    TrainConfig cfg;
    cfg.eta = 0.05;
    cfg.kappa_hat = 10.0;
    CHECK_NOTHROW(cfg.validate());
    cfg.eta = 0.2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.schedule = StepSchedule::diminishing;
    cfg.mu_hat = 1.0;
    cfg.c = 0.5;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.c = 2.0;
    cfg.gamma = 10.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.gamma = 20.0;
    CHECK_NOTHROW(cfg.validate());
    for (std::size_t k = 0; k < 1000; ++k) CHECK(cfg.step_size(k) <= 1.0 / cfg.kappa_hat);
    CHECK(cfg.step_size(5) == doctest::Approx(2.0 / 25.0));
    cfg.n_samples = 8;
    cfg.batch_size = 16;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("empirical loss examples") {
    const VelocityNet zero2(NetArchitecture{2, {4}});
    const auto pm = DistributionSpec::point_mass({0.0, 0.0});
    RngStream rng(1, 0);
    CHECK(empirical_loss(zero2, draw_coupled(rng, pm, pm, 10)) == 0.0);
    const std::vector<CoupledSample> one{CoupledSample::make({0.0, 0.0}, {3.0, 4.0}, 0.5)};
    CHECK(empirical_loss(zero2, one) == 25.0);
    CHECK_THROWS(empirical_loss(zero2, std::span<const CoupledSample>{}));
}

TEST_CASE("empirical loss matches a compensated-sum oracle") {
    RngStream rng(2, 0);
    for (int trial = 0; trial < 5; ++trial) {
        auto a = arch_1d({8}, 2.0);
        a.dim = 2;
        const auto net = VelocityNet::initialized(a, rng);
        const auto data = draw_coupled(rng, DistributionSpec::gaussian({0.0, 0.0}, 1.0),
                                       DistributionSpec::gaussian({3.0, -1.0}, 0.5), 2000);
        CHECK(empirical_loss(net, data) == doctest::Approx(kahan_loss(net, data)).epsilon(1e-12));
    }
}

TEST_CASE("constant displacement is learned") {
    RngStream rng(3, 0);
    const auto data = draw_coupled(rng, DistributionSpec::point_mass({0.0}), DistributionSpec::point_mass({0.75}), 256);
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.steps = 3000;
    cfg.eta = 0.1;
    cfg.seed = 5;
    auto net = VelocityNet::initialized(arch_1d({8}, 4.0), rng);
    const auto result = train(net, data, cfg);
    CHECK(result.trace.final_loss < 1e-4);
    CHECK(result.trace.final_loss <= result.trace.initial_loss);
}

TEST_CASE("training is deterministic and stays feasible") {
    RngStream rng(4, 0);
    const auto data = draw_coupled(rng, DistributionSpec::gaussian({0.0}, 1.0), DistributionSpec::gaussian({2.0}, 1.0), 512);
    TrainConfig cfg;
    cfg.batch_size = 16;
    cfg.steps = 400;
    cfg.eta = 0.1;
    cfg.seed = 77;
    RngStream init(8, 0);
    const auto net = VelocityNet::initialized(arch_1d({16}, 1.5), init);
    const auto r1 = train(net, data, cfg);
    const auto r2 = train(net, data, cfg);
    CHECK(r1.trace.final_theta == r2.trace.final_theta);
    CHECK(r1.trace.steps.size() == cfg.steps);
    for (const auto& s : r1.trace.steps) {
        CHECK(s.max_row_l1 <= 1.5 + 1e-12);
        CHECK(std::isfinite(s.loss));
        CHECK(s.eta == cfg.eta);
    }
    cfg.seed = 78;
    CHECK(train(net, data, cfg).trace.final_theta != r1.trace.final_theta);
}

TEST_CASE("full-batch descent with a safe step is monotone") {
    RngStream rng(5, 0);
    const auto data = draw_coupled(rng, DistributionSpec::gaussian({0.0}, 1.0), DistributionSpec::gaussian({2.0}, 1.0), 128);
    RngStream init(6, 0);
    const auto net = VelocityNet::initialized(arch_1d({8}, 2.0), init);
    const double kappa = estimate_smoothness(net, data, 100, 0.5, rng);
    TrainConfig cfg;
    cfg.batch_size = data.size();
    cfg.steps = 300;
    cfg.kappa_hat = std::max(kappa, 1.0) * 2.0;
    cfg.eta = 1.0 / cfg.kappa_hat;
    const auto result = train(net, data, cfg);
    for (std::size_t k = 1; k < result.trace.steps.size(); ++k)
        CHECK(result.trace.steps[k].loss <= result.trace.steps[k - 1].loss + 1e-12);
}

TEST_CASE("divergence is detected") {
    RngStream rng(6, 0);
    const auto data = draw_coupled(rng, DistributionSpec::point_mass({0.0}), DistributionSpec::point_mass({1.0}), 64);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.steps = 10;
    VelocityNet net(arch_1d({4}, 1.0));
    std::vector<CoupledSample> bad = data;
    bad[0].displacement[0] = NAN;
    CHECK_THROWS_AS(train(net, bad, cfg), NumericError);
}

TEST_CASE("trace csv") {
    TrainTrace trace;
    trace.steps.push_back({1.5, 2.0, 0.1, 0.5});
    std::ostringstream out;
    trace.write_csv(out);
    CHECK(out.str().rfind("step,loss,grad_norm,eta,max_row_l1\n", 0) == 0);
    CHECK(out.str().find("\n0,1.5,2,") != std::string::npos);
}

TEST_CASE("PL diagnostic on exact quadratics") {
    for (double a : {1.0, 3.0}) {
        const auto report = pl_diagnostic(quadratic_trace(a, 50), a, 0.0);
        CHECK(report.min_ratio == doctest::Approx(a).epsilon(1e-12));
        for (const auto& r : report.ratios)
            if (r) CHECK(*r == doctest::Approx(a).epsilon(1e-12));
    }
    auto trace = quadratic_trace(1.0, 3);
    trace.steps.push_back({0.0, 0.0, 0.1, 0.0});
    const auto report = pl_diagnostic(trace, 1.0, 0.0);
    CHECK(report.degenerate_steps == 1);
    CHECK_FALSE(report.ratios.back().has_value());
    CHECK_THROWS(pl_diagnostic(trace, 1.0, 1.0));
}

TEST_CASE("noiseless diminishing-step SGD converges") {
    QuadraticProblem problem{{1.0, 2.0, 4.0}, 0.0, 1.0};
    SgdRateConfig cfg;
    cfg.c = 4.0;
    cfg.gamma = 16.0;
    cfg.steps = 5000;
    cfg.seeds = 1;
    CHECK(sgd_rate_check(problem, cfg).mean_gap.back() < 1e-8);
}

TEST_CASE("recursion envelope matches a hand iteration") {
    SgdRateConfig cfg;
    cfg.c = 2.0;
    cfg.gamma = 20.0;
    cfg.steps = 50;
    const auto env = recursion_envelope(3.0, 1.0, 10.0, 0.5, cfg);
    double d = 3.0;
    for (std::size_t k = 0; k < 50; ++k) {
        const double eta = cfg.c / (k + cfg.gamma);
        d = (1.0 - eta) * d + 10.0 * 0.5 * eta * eta / 2.0;
    }
    CHECK(env.size() == 51);
    CHECK(env.back() == doctest::Approx(d).epsilon(1e-14));
}

TEST_CASE("noisy diminishing-step SGD decays like 1/k under the envelope") {
    QuadraticProblem problem{{1.0, 2.0, 4.0, 8.0}, 1.0, 1.0};
    SgdRateConfig cfg;
    cfg.c = 2.0;
    cfg.gamma = 16.0;
    cfg.steps = 20000;
    cfg.seeds = 20;
    const auto report = sgd_rate_check(problem, cfg);
    CHECK(report.slope >= -1.3);
    CHECK(report.slope <= -0.7);
    CHECK(report.worst_envelope_ratio <= 1.5);
}

TEST_CASE("constant-step SGD plateaus") {
    QuadraticProblem problem{{1.0, 2.0}, 1.0, 1.0};
    SgdRateConfig cfg;
    cfg.schedule = StepSchedule::constant;
    cfg.eta = 0.1;
    cfg.steps = 20000;
    cfg.seeds = 20;
    const auto report = sgd_rate_check(problem, cfg);
    CHECK(std::abs(report.slope) < 0.15);
    CHECK(report.mean_gap.back() > 1e-3);
}
