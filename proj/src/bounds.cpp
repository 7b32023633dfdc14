#include "rflow/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace rflow {

namespace {

constexpr double kHalfSqrtPi = 0.88622692545275801365;  // sqrt(pi) / 2

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("bounds: ") + name + " must be positive");
}

}  // namespace

void ArchConstants::validate() const {
    require_positive(b, "b");
    require_positive(V, "V");
    require_positive(L_phi, "L_phi");
    if (depth == 0) throw std::invalid_argument("bounds: depth must be at least 1");
    if (!(lv() > 1.0)) throw std::invalid_argument("bounds: L_phi * V must exceed 1");
}

void BoundInputs::validate() const {
    if (P == 0) throw std::invalid_argument("bounds: P must be positive");
    require_positive(n, "n");
    require_positive(B, "B");
    require_positive(L_ell, "L_ell");
    require_positive(mu, "mu");
    require_positive(L_theta, "L_theta");
    require_positive(C_univ, "C_univ");
    require_positive(epsilon, "epsilon");
    require_positive(sigma, "sigma");
    if (!(x_conf >= 0.0)) throw std::invalid_argument("bounds: x_conf must be non-negative");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("bounds: delta must lie in (0, 1)");
    if (!(eps_approx >= 0.0)) throw std::invalid_argument("bounds: eps_approx must be non-negative");
    arch.validate();
}

BoundInputs BoundInputs::from_architecture(const NetArchitecture& arch, double mu, double n, double M_disp) {
    arch.validate();
    const LipschitzReport lip = lipschitz_report(arch, M_disp);
    BoundInputs in;
    in.P = arch.parameter_count();
    in.n = n;
    in.mu = mu;
    in.L_theta = lip.L_theta;
    in.L_ell = lip.L_ell;
    in.B = bernstein_B(lip.L_theta, mu);
    in.arch = ArchConstants{arch.b, arch.V, arch.L_phi, arch.depth()};
    return in;
}

double bernstein_B(double L_theta, double mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("bernstein_B: mu must be positive");
    return 2.0 * L_theta * L_theta / mu;
}

double covering_constant_A(std::size_t P, const ArchConstants& arch) {
    arch.validate();
    const double lv = arch.lv();
    return 4.0 * std::numbers::e * arch.b * static_cast<double>(P) * std::pow(lv, static_cast<double>(arch.depth)) /
           (lv - 1.0);
}

double log_covering(std::size_t P, double m, double eps, const ArchConstants& arch) {
    arch.validate();
    if (P == 0) throw std::invalid_argument("log_covering: P must be positive");
    require_positive(m, "m");
    if (!(eps > 0.0)) throw std::invalid_argument("log_covering: eps must be positive");
    if (eps > 2.0 * arch.b) throw std::invalid_argument("log_covering: eps must not exceed 2b");
    const double p = static_cast<double>(P);
    // log of the product, summed term by term to stay finite for deep nets
    const double log_arg = std::log(4.0) + 1.0 + std::log(m) + std::log(arch.b) + std::log(p) +
                           static_cast<double>(arch.depth) * std::log(arch.lv()) - std::log(eps) -
                           std::log(arch.lv() - 1.0);
    return p * log_arg;
}

DudleyValue dudley_local_rad(const BoundInputs& in, double r, std::optional<double> frozen_log_term) {
    in.validate();
    if (!(r > 0.0)) throw std::invalid_argument("dudley_local_rad: r must be positive");
    DudleyValue d;
    d.prefactor = 12.0 * std::sqrt(static_cast<double>(in.P) * r) / (in.L_ell * std::sqrt(in.n));
    d.log_argument = covering_constant_A(in.P, in.arch) * in.n * in.L_ell / std::sqrt(r);
    if (frozen_log_term) {
        d.frozen_log = true;
        d.log_term = *frozen_log_term;
    } else if (!(d.log_argument > 1.0)) {
        d.vacuous = true;
        d.value = std::numeric_limits<double>::infinity();
        return d;
    } else {
        d.log_term = std::sqrt(std::log(d.log_argument)) + kHalfSqrtPi;
    }
    d.value = d.prefactor * d.log_term;
    return d;
}

double psi(const BoundInputs& in, double r) {
    if (!(r > 0.0)) throw std::invalid_argument("psi: r must be positive");
    const double arg = covering_constant_A(in.P, in.arch) * in.n * in.L_ell / std::sqrt(r);
    if (!(arg > 1.0)) throw BoundError("psi: log argument A n L_ell / sqrt(r) <= 1 (vacuous regime)");
    return 12.0 * in.B * std::sqrt(static_cast<double>(in.P) * r / in.n) * (std::sqrt(std::log(arg)) + kHalfSqrtPi);
}

double r_star_closed_form(const BoundInputs& in) {
    in.validate();
    const double p = static_cast<double>(in.P);
    return static_cast<double>(kFixedPointConstant) * in.B * in.B * p / in.n *
           (std::log(in.C_univ * in.n * in.L_ell * in.L_ell / p) + 1.0);
}

FixedPoint psi_and_fixed_point(const BoundInputs& in) {
    in.validate();
    FixedPoint fp;
    fp.psi = [in](double r) { return psi(in, r); };
    fp.r_star = r_star_closed_form(in);

    // psi(r) - r is positive near 0 (psi ~ sqrt(r log(1/r))) and negative once
    // sqrt(r) outgrows the prefactor; r_max keeps the log argument above 1.
    const double A = covering_constant_A(in.P, in.arch);
    const double r_max = std::pow(A * in.n * in.L_ell, 2) * (1.0 - 1e-12);
    auto gap = [&](double r) { return psi(in, r) - r; };

    double start = fp.r_star > 0.0 ? std::min(fp.r_star, r_max / 2.0) : std::min(1.0, r_max / 2.0);
    double lo = start, hi = start;
    for (int i = 0; gap(lo) <= 0.0; ++i) {
        lo /= 4.0;
        if (i > 2000 || !(lo > 0.0)) throw BoundError("psi_and_fixed_point: no lower bracket for r = psi(r)");
    }
    for (int i = 0; gap(hi) >= 0.0; ++i) {
        hi = std::min(hi * 4.0, r_max);
        if (i > 2000 || hi >= r_max) throw BoundError("psi_and_fixed_point: no upper bracket for r = psi(r)");
    }
    while (hi / lo - 1.0 > 1e-10) {
        const double mid = std::sqrt(lo * hi);
        if (gap(mid) > 0.0) lo = mid;
        else hi = mid;
        if (++fp.iterations > 500) throw BoundError("psi_and_fixed_point: bisection did not converge");
    }
    fp.r_root = std::sqrt(lo * hi);
    return fp;
}

ExcessRiskBound excess_risk_bound(const BoundInputs& in, double r_star) {
    in.validate();
    if (!(r_star >= 0.0)) throw std::invalid_argument("excess_risk_bound: r_star must be non-negative");
    ExcessRiskBound e;
    e.localized_term = static_cast<double>(kLocalRadConstant) * r_star / in.B;
    e.confidence_term = (11.0 * in.L_ell + 2.0 * in.B) * in.x_conf / in.n;
    e.value = e.localized_term + e.confidence_term;

    const double p = static_cast<double>(in.P);
    e.combined_leading = static_cast<double>(kCombinedConstant) * in.B * p / in.n *
                         (std::log(in.C_univ * in.n * in.L_ell * in.L_ell / p) + 1.0);
    const double substituted = static_cast<double>(kLocalRadConstant) * r_star_closed_form(in) / in.B;
    const double scale = std::max(std::abs(e.combined_leading), std::numeric_limits<double>::min());
    e.cross_check_rel_error = std::abs(substituted - e.combined_leading) / scale;
    e.cross_check_ok = e.cross_check_rel_error <= 1e-10;
    return e;
}

double stat_bound_at(const BoundInputs& in, double n, double x) {
    BoundInputs at = in;
    at.n = n;
    at.x_conf = x;
    return in.B * excess_risk_bound(at, r_star_closed_form(at)).value;
}

SampleSizeReport stat_bound_and_sample_size(const BoundInputs& in) {
    in.validate();
    SampleSizeReport s;
    s.x_stat = std::log(2.0 / in.delta);
    s.x_sample = std::log(6.0 / in.delta);
    s.budget = in.epsilon * in.epsilon / 9.0;
    s.stat = stat_bound_at(in, in.n, s.x_stat);
    s.side_condition_ok = 2.0 * in.n > std::exp(s.x_stat);

    // The bound decreases in n once C n L_ell^2 / P >= 1; below that the log
    // term turns negative and the formula says nothing. The side condition
    // 2n > e^x is imposed on the search range as well.
    const double p = static_cast<double>(in.P);
    const double n_log = std::floor(p / (in.C_univ * in.L_ell * in.L_ell)) + 1.0;
    const double n_side = std::floor(std::exp(s.x_sample) / 2.0) + 1.0;
    constexpr double n_cap = 4611686018427387904.0;  // 2^62
    const double n_floor = std::max({2.0, n_log, n_side});
    if (n_floor >= n_cap) {
        s.message = "search range starts beyond 2^62";
        return s;
    }
    auto ok = [&](double n) { return stat_bound_at(in, n, s.x_sample) <= s.budget; };

    std::uint64_t lo = static_cast<std::uint64_t>(n_floor);
    if (ok(static_cast<double>(lo))) {
        s.n_required = lo;
        s.satisfiable = true;
        return s;
    }
    std::uint64_t hi = lo;
    while (!ok(static_cast<double>(hi))) {
        lo = hi;
        if (static_cast<double>(hi) * 2.0 > n_cap) {
            s.message = "epsilon too small: no n below 2^62 meets the budget";
            return s;
        }
        hi *= 2;
    }
    while (hi - lo > 1) {
        const std::uint64_t mid = lo + (hi - lo) / 2;
        if (ok(static_cast<double>(mid))) hi = mid;
        else lo = mid;
    }
    s.n_required = hi;
    s.satisfiable = true;
    return s;
}

TruncationReport truncation_bias_report(const BoundInputs& in) {
    if (!(in.n >= 2.0)) throw std::invalid_argument("truncation_bias_report: n must be at least 2");
    TruncationReport t;
    t.n = in.n;
    t.sigma = in.sigma;
    t.M = truncation_level(in.sigma, static_cast<std::size_t>(in.n), in.tail.C, in.tail.c);
    t.delta_n = 1.0 / (2.0 * in.n * in.n);
    t.bias_budget = (t.M * t.M + in.sigma * in.sigma) * t.delta_n;
    t.bad_event_budget = in.n * t.delta_n;
    return t;
}

BoundReport evaluate_bounds(const BoundInputs& in) {
    in.validate();
    BoundReport rep;
    rep.inputs = in;
    rep.B = in.B;
    const FixedPoint fp = psi_and_fixed_point(in);
    rep.r_star = fp.r_star;
    rep.r_root = fp.r_root;
    rep.covering_eps = std::min(std::sqrt(std::max(fp.r_star, 0.0)) / in.L_ell, 2.0 * in.arch.b);
    if (!(rep.covering_eps > 0.0)) rep.covering_eps = 2.0 * in.arch.b;
    rep.log_covering = log_covering(in.P, in.n, rep.covering_eps, in.arch);
    rep.dudley = dudley_local_rad(in, fp.r_star > 0.0 ? fp.r_star : fp.r_root);
    for (int k = -4; k <= 4; ++k) {
        const double r = fp.r_root * std::pow(10.0, k);
        rep.psi_grid.emplace_back(r, fp.psi(r));
    }
    rep.excess = excess_risk_bound(in, fp.r_star);
    rep.sample = stat_bound_and_sample_size(in);
    rep.truncation = truncation_bias_report(in);
    rep.constant_identity = kLocalRadConstant * kFixedPointConstant == kCombinedConstant;
    rep.side_condition_ok = 2.0 * in.n > std::exp(in.x_conf);
    return rep;
}

namespace {

struct LocalClass {
    const VelocityNet& center;
    std::span<const CoupledSample> data;
    std::vector<Vec> center_out;
    double L_ell;
    double r;
    double norm;  // 1 / (n d)

    double distance(const VelocityNet& net) const {
        double s = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i)
            s += norm2_squared(sub(net.forward(data[i].x_t, data[i].t), center_out[i]));
        return L_ell * L_ell * s * norm;
    }

    double correlation(const VelocityNet& net, const std::vector<double>& signs) const {
        const std::size_t d = center_out.front().size();
        double s = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const Vec out = net.forward(data[i].x_t, data[i].t);
            for (std::size_t k = 0; k < d; ++k) s += signs[i * d + k] * (out[k] - center_out[i][k]);
        }
        return s * norm;
    }

    // Gradient of the correlation; it is linear in the outputs, so the
    // cotangent is just the sign scaled by 1/(n d).
    void gradient(const VelocityNet& net, const std::vector<double>& signs, std::vector<double>& grad) const {
        const std::size_t d = center_out.front().size();
        std::fill(grad.begin(), grad.end(), 0.0);
        Tape tape;
        Vec dv(d);
        for (std::size_t i = 0; i < data.size(); ++i) {
            net.forward(data[i].x_t, data[i].t, tape);
            for (std::size_t k = 0; k < d; ++k) dv[k] = signs[i * d + k] * norm;
            net.backward(tape, dv, grad);
        }
    }

    // Pulls `net` back along the segment from the center until it is inside
    // the localization ball. The row constraints are convex and hold at both
    // ends, so they hold along the whole segment.
    void retract(VelocityNet& net) const {
        if (distance(net) <= r) return;
        const std::vector<double> far(net.theta().begin(), net.theta().end());
        const auto base = center.theta();
        auto place = [&](double s) {
            auto th = net.theta();
            for (std::size_t j = 0; j < th.size(); ++j) th[j] = base[j] + s * (far[j] - base[j]);
        };
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 30; ++it) {
            const double mid = 0.5 * (lo + hi);
            place(mid);
            if (distance(net) <= r) lo = mid;
            else hi = mid;
        }
        place(lo);
    }
};

double ascend(const LocalClass& cls, const std::vector<double>& signs, const RademacherOptions& opt, RngStream& rng) {
    const auto& arch = cls.center.arch();
    VelocityNet net = cls.center;
    for (double& w : net.theta()) w += 0.1 * arch.V * rng.normal() / std::sqrt(static_cast<double>(net.parameter_count()));
    net.project();
    cls.retract(net);

    double best = 0.0;  // the center itself is feasible with correlation 0
    std::vector<double> grad(net.parameter_count());
    for (std::size_t k = 0; k < opt.ascent_steps; ++k) {
        best = std::max(best, cls.correlation(net, signs));
        cls.gradient(net, signs, grad);
        const double gn = norm2(grad);
        if (!(gn > 0.0)) break;
        const double step = opt.step_size * arch.V / std::sqrt(static_cast<double>(k + 1)) / gn;
        axpy(step, grad, net.theta());
        net.project();
        cls.retract(net);
    }
    return std::max(best, cls.correlation(net, signs));
}

}  // namespace

RademacherEstimate empirical_local_rademacher(const VelocityNet& center, std::span<const CoupledSample> data,
                                              double r, double L_ell, const RademacherOptions& options,
                                              RngStream& rng) {
    if (data.empty()) throw std::invalid_argument("empirical_local_rademacher: empty data");
    if (data.size() > 512) throw std::invalid_argument("empirical_local_rademacher: at most 512 points supported");
    if (center.parameter_count() > 200)
        throw std::invalid_argument("empirical_local_rademacher: at most 200 parameters supported");
    if (!(r >= 0.0)) throw std::invalid_argument("empirical_local_rademacher: r must be non-negative");
    require_positive(L_ell, "L_ell");
    if (options.n_signs == 0 || options.n_restarts == 0)
        throw std::invalid_argument("empirical_local_rademacher: n_signs and n_restarts must be positive");

    const VelocityNet feasible_center = project_constraints(center);
    const std::size_t d = feasible_center.arch().dim;
    LocalClass cls{feasible_center, data, {}, L_ell, r, 1.0 / static_cast<double>(data.size() * d)};
    cls.center_out.reserve(data.size());
    for (const auto& s : data) cls.center_out.push_back(feasible_center.forward(s.x_t, s.t));

    const std::uint64_t base = rng.next_u64();
    std::vector<double> maxima(options.n_signs, 0.0);
    auto run = [&](std::size_t j) {
        RngStream stream(base, j);
        std::vector<double> signs(data.size() * d);
        for (double& s : signs) s = stream.sign();
        double best = 0.0;
        for (std::size_t k = 0; k < options.n_restarts; ++k) best = std::max(best, ascend(cls, signs, options, stream));
        maxima[j] = best;
    };
    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, options.n_signs);
    if (jobs == 1) {
        for (std::size_t j = 0; j < options.n_signs; ++j) run(j);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < jobs; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t j = w; j < options.n_signs; j += jobs) run(j);
            });
        for (auto& t : pool) t.join();
    }

    RademacherEstimate e;
    e.n_signs = options.n_signs;
    e.n_restarts = options.n_restarts;
    e.label = "lower estimate (projected ascent, " + std::to_string(options.n_restarts) + " restarts)";
    const double m = static_cast<double>(maxima.size());
    double sum = 0.0, sum_sq = 0.0;
    e.min = maxima.front();
    e.max = maxima.front();
    for (double v : maxima) {
        sum += v;
        sum_sq += v * v;
        e.min = std::min(e.min, v);
        e.max = std::max(e.max, v);
    }
    e.mean = sum / m;
    e.std_dev = m > 1.0 ? std::sqrt(std::max(sum_sq - m * e.mean * e.mean, 0.0) / (m - 1.0)) : 0.0;
    return e;
}

}  // namespace rflow
