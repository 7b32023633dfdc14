#include "rflow/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "rflow/metrics.hpp"

namespace rflow {

double TrainConfig::step_size(std::size_t k) const {
    if (schedule == StepSchedule::constant) return eta;
    return c / (static_cast<double>(k) + gamma);
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (n_samples != 0 && batch_size > n_samples) throw std::invalid_argument("train: batch_size exceeds n_samples");
    if (!(kappa_hat > 0.0)) throw std::invalid_argument("train: kappa_hat must be positive");
    if (schedule == StepSchedule::constant) {
        if (!(eta > 0.0)) throw std::invalid_argument("train: eta must be positive");
        if (eta > 1.0 / kappa_hat) throw std::invalid_argument("train: constant step requires eta <= 1/kappa_hat");
    } else {
        if (!(mu_hat > 0.0)) throw std::invalid_argument("train: mu_hat must be positive");
        if (!(c > 1.0 / mu_hat)) throw std::invalid_argument("train: diminishing schedule requires c > 1/mu_hat");
        if (gamma < kappa_hat * c) throw std::invalid_argument("train: diminishing schedule requires gamma >= kappa_hat * c");
    }
}

void TrainTrace::write_csv(std::ostream& out) const {
    out << "step,loss,grad_norm,eta,max_row_l1\n";
    out.precision(17);
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const auto& s = steps[k];
        out << k << ',' << s.loss << ',' << s.grad_norm << ',' << s.eta << ',' << s.max_row_l1 << '\n';
    }
}

double empirical_loss(const VelocityNet& net, std::span<const CoupledSample> data) {
    if (data.empty()) throw std::invalid_argument("empirical_loss: empty data");
    Tape tape;
    double total = 0.0;
    for (const auto& s : data) {
        const Vec& v = net.forward(s.x_t, s.t, tape);
        double sq = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double r = v[k] - s.displacement[k];
            sq += r * r;
        }
        total += sq;
    }
    return total / static_cast<double>(data.size());
}

TrainResult train(VelocityNet net, std::span<const CoupledSample> data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train: empty data");
    if (cfg.n_samples != 0 && cfg.n_samples != data.size())
        throw std::invalid_argument("train: dataset size differs from n_samples");
    if (cfg.batch_size > data.size()) throw std::invalid_argument("train: batch_size exceeds dataset size");

    RngStream rng(cfg.seed, 0x7472);
    TrainTrace trace;
    trace.initial_loss = empirical_loss(net, data);
    const double limit = 1e3 * std::max(trace.initial_loss, 1e-12);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = data.size();

    std::vector<CoupledSample> batch;
    batch.reserve(cfg.batch_size);
    std::vector<double> grad(net.parameter_count());
    const bool full_batch = cfg.batch_size == data.size();

    trace.steps.reserve(cfg.steps);
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        double loss;
        if (full_batch) {
            loss = loss_and_gradient(net, data, grad);
        } else {
            if (cursor + cfg.batch_size > data.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            batch.clear();
            for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(data[order[cursor + i]]);
            cursor += cfg.batch_size;
            loss = loss_and_gradient(net, batch, grad);
        }
        if (!std::isfinite(loss) || loss > limit)
            throw TrainingDiverged("train: loss diverged at step " + std::to_string(k));

        const double eta = cfg.step_size(k);
        axpy(-eta, grad, net.theta());
        net.project();
        trace.steps.push_back({loss, norm2(grad), eta, net.max_row_l1()});
    }
    trace.final_loss = empirical_loss(net, data);
    if (!std::isfinite(trace.final_loss) || trace.final_loss > limit)
        throw TrainingDiverged("train: final loss diverged");
    trace.final_theta.assign(net.theta().begin(), net.theta().end());
    return {std::move(net), std::move(trace)};
}

double estimate_smoothness(const VelocityNet& net, std::span<const CoupledSample> data, std::size_t probes,
                           double radius, RngStream& rng) {
    if (probes == 0 || !(radius > 0.0)) throw std::invalid_argument("estimate_smoothness: bad probe settings");
    std::vector<double> g0(net.parameter_count());
    std::vector<double> g1(net.parameter_count());
    loss_and_gradient(net, data, g0);
    double worst = 0.0;
    for (std::size_t p = 0; p < probes; ++p) {
        VelocityNet moved = net;
        Vec u(net.parameter_count());
        for (double& x : u) x = rng.normal();
        const double scale = radius / norm2(u);
        for (double& x : u) x *= scale;
        axpy(1.0, u, moved.theta());
        loss_and_gradient(moved, data, g1);
        worst = std::max(worst, norm2(sub(g1, g0)) / norm2(u));
    }
    return worst;
}

PLReport pl_diagnostic(const TrainTrace& trace, double mu_hat, double loss_star) {
    if (trace.steps.empty()) throw std::invalid_argument("pl_diagnostic: empty trace");
    double min_loss = trace.steps.front().loss;
    for (const auto& s : trace.steps) min_loss = std::min(min_loss, s.loss);
    if (loss_star > min_loss + 1e-9) throw std::invalid_argument("pl_diagnostic: loss_star exceeds the smallest traced loss");

    PLReport r;
    r.mu_hat = mu_hat;
    r.min_ratio = std::numeric_limits<double>::infinity();
    for (const auto& s : trace.steps) {
        const double gap = s.loss - loss_star;
        if (gap < 1e-12) {
            r.ratios.emplace_back(std::nullopt);
            ++r.degenerate_steps;
            continue;
        }
        const double ratio = s.grad_norm * s.grad_norm / (2.0 * gap);
        r.ratios.emplace_back(ratio);
        r.min_ratio = std::min(r.min_ratio, ratio);
    }
    return r;
}

double QuadraticProblem::mu() const { return *std::min_element(curvatures.begin(), curvatures.end()); }

double QuadraticProblem::kappa() const { return *std::max_element(curvatures.begin(), curvatures.end()); }

double QuadraticProblem::loss(std::span<const double> theta) const {
    double s = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) s += 0.5 * curvatures[i] * theta[i] * theta[i];
    return s;
}

namespace {

TrainConfig schedule_of(const SgdRateConfig& cfg) {
    TrainConfig t;
    t.schedule = cfg.schedule;
    t.eta = cfg.eta;
    t.c = cfg.c;
    t.gamma = cfg.gamma;
    return t;
}

}  // namespace

std::vector<double> recursion_envelope(double delta0, double mu, double kappa, double sigma2,
                                       const SgdRateConfig& cfg) {
    const TrainConfig sched = schedule_of(cfg);
    std::vector<double> env(cfg.steps + 1);
    env[0] = delta0;
    for (std::size_t k = 0; k < cfg.steps; ++k) {
        const double eta = sched.step_size(k);
        env[k + 1] = (1.0 - mu * eta) * env[k] + 0.5 * kappa * sigma2 * eta * eta;
    }
    return env;
}

SgdRateReport sgd_rate_check(const QuadraticProblem& problem, const SgdRateConfig& cfg) {
    if (problem.curvatures.empty()) throw std::invalid_argument("sgd_rate_check: no curvatures");
    if (cfg.seeds == 0 || cfg.steps < 20) throw std::invalid_argument("sgd_rate_check: need seeds >= 1 and steps >= 20");
    const std::size_t p = problem.curvatures.size();
    const double mu = problem.mu();
    const double kappa = problem.kappa();
    const TrainConfig sched = schedule_of(cfg);
    if (cfg.schedule == StepSchedule::diminishing) {
        if (!(cfg.c > 1.0 / mu)) throw std::invalid_argument("sgd_rate_check: requires c > 1/mu");
        if (cfg.gamma < kappa * cfg.c) throw std::invalid_argument("sgd_rate_check: requires gamma >= kappa c");
    } else if (cfg.eta > 1.0 / kappa) {
        throw std::invalid_argument("sgd_rate_check: requires eta <= 1/kappa");
    }

    const double noise_scale = problem.noise_sigma / std::sqrt(static_cast<double>(p));
    SgdRateReport report;
    report.mean_gap.assign(cfg.steps + 1, 0.0);
    for (std::size_t seed = 0; seed < cfg.seeds; ++seed) {
        RngStream rng(cfg.base_seed, 0x5347 + seed);
        std::vector<double> theta(p, problem.theta0_scale);
        report.mean_gap[0] += problem.loss(theta);
        for (std::size_t k = 0; k < cfg.steps; ++k) {
            const double eta = sched.step_size(k);
            for (std::size_t i = 0; i < p; ++i) {
                const double g = problem.curvatures[i] * theta[i] + noise_scale * rng.normal();
                theta[i] -= eta * g;
            }
            report.mean_gap[k + 1] += problem.loss(theta);
        }
    }
    for (double& g : report.mean_gap) g /= static_cast<double>(cfg.seeds);

    report.envelope = recursion_envelope(report.mean_gap[0], mu, kappa,
                                         problem.noise_sigma * problem.noise_sigma, cfg);
    for (std::size_t k = 10; k <= cfg.steps; ++k)
        report.worst_envelope_ratio = std::max(report.worst_envelope_ratio, report.mean_gap[k] / report.envelope[k]);

    // Log-spaced iterations across the final decade [steps/10, steps].
    std::vector<std::pair<double, double>> grid;
    const double lo = std::log(static_cast<double>(cfg.steps) / 10.0);
    const double hi = std::log(static_cast<double>(cfg.steps));
    constexpr int kPoints = 40;
    for (int i = 0; i < kPoints; ++i) {
        const double k = std::round(std::exp(lo + (hi - lo) * i / (kPoints - 1)));
        const auto idx = static_cast<std::size_t>(k);
        const double gap = report.mean_gap[idx];
        if (gap > 0.0) grid.emplace_back(k, gap);
    }
    report.slope = fit_rate(grid).slope;
    return report;
}

}  // namespace rflow
