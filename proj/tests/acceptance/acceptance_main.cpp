#include <boost/multiprecision/cpp_bin_float.hpp>
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>

#include "rflow/experiment.hpp"

namespace fs = std::filesystem;
using namespace rflow;
using HighPrecision = boost::multiprecision::cpp_bin_float_50;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double time_limit_s;
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// Gradient correctness over four small architectures.
Outcome gradients() {
    struct Shape {
        std::size_t dim;
        std::vector<std::size_t> hidden;
        Activation act;
    };
    const std::vector<Shape> shapes{{1, {8}, Activation::tanh},
                                    {3, {6}, Activation::sigmoid},
                                    {2, {8, 8}, Activation::tanh},
                                    {3, {4, 8}, Activation::sigmoid}};
    double worst = 0.0;
    for (const auto& s : shapes) {
        NetArchitecture arch;
        arch.dim = s.dim;
        arch.hidden = s.hidden;
        arch.activation = s.act;
        arch.V = 2.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            RngStream rng(seed, 0xAC1);
            VelocityNet net = VelocityNet::initialized(arch, rng);
            for (double& w : net.theta()) w += 0.1 * rng.normal();
            net.project();
            const auto batch = draw_coupled(rng, DistributionSpec::gaussian(Vec(s.dim, 0.0), 1.0),
                                            DistributionSpec::gaussian(Vec(s.dim, 1.5), 0.8), 16);
            worst = std::max(worst, gradient_check(net, batch).rel_error);
        }
    }
    return {worst <= 1e-5, "max relative error " + fmt("%.3g", worst) + " over 80 networks (tol 1e-5)"};
}

// Binned conditional means of the displacement against the closed-form field.
Outcome oracle_fidelity() {
    const GaussianPairSpec pair{{0.0}, {2.0}, 1.0, 1.0};
    RngStream rng(2, 0xAC2);
    std::size_t populated = 0, failures = 0;
    for (int k = 1; k <= 9; ++k) {
        const double t = 0.1 * k;
        struct Bin {
            double sx = 0, sy = 0, sy2 = 0;
            std::size_t hits = 0;
        };
        std::map<long, Bin> bins;
        for (std::size_t i = 0; i < 400000; ++i) {
            const double x0 = pair.mu0[0] + pair.std0 * rng.normal();
            const double x1 = pair.mu1[0] + pair.std1 * rng.normal();
            const double xt = (1.0 - t) * x0 + t * x1;
            auto& b = bins[std::lround(std::floor(xt / 0.1))];
            b.sx += xt;
            b.sy += x1 - x0;
            b.sy2 += (x1 - x0) * (x1 - x0);
            ++b.hits;
        }
        for (const auto& [key, b] : bins) {
            if (b.hits < 1000) continue;
            ++populated;
            const double n = static_cast<double>(b.hits);
            const double mean = b.sy / n;
            const double se = std::sqrt((b.sy2 / n - mean * mean) / (n - 1.0));
            if (std::abs(mean - vstar_gaussian(pair, Vec{b.sx / n}, t)[0]) > 3.0 * se) ++failures;
        }
    }
    const VelocityField field = vstar_field(pair);
    std::vector<double> pushed, target;
    for (int i = 0; i < 20000; ++i) pushed.push_back(euler_terminal(field, Vec{rng.normal()}, 1000)[0]);
    for (int i = 0; i < 20000; ++i) target.push_back(2.0 + rng.normal());
    const double w2 = w2_empirical_1d(pushed, target);
    return {failures == 0 && w2 < 0.05, std::to_string(failures) + " of " + std::to_string(populated) +
                                            " bins outside 3 SE; transport W2 " + fmt("%.4f", w2) + " (< 0.05)"};
}

// One sweep serves the excess-risk and the Wasserstein rate.
const SweepResult& gaussian_sweep() {
    static const SweepResult result = run_sweep(preset(Task::gaussian_1d), worker_count(), false);
    return result;
}

Outcome excess_rate() {
    const auto& r = gaussian_sweep();
    if (!r.excess_fit) return {false, "no excess-risk fit"};
    const double s = r.excess_fit->slope;
    return {s >= -1.35 && s <= -0.65, "slope " + fmt("%.3f", s) + " in [-1.35, -0.65], R^2 " +
                                          fmt("%.3f", r.excess_fit->r_squared)};
}

Outcome w2_rate() {
    const auto& r = gaussian_sweep();
    if (!r.w2_fit) return {false, "no corrected W2 fit (fewer than 4 grid points above baseline)"};
    const double s = r.w2_fit->slope;
    return {s >= -0.75 && s <= -0.25, "slope " + fmt("%.3f", s) + " in [-0.75, -0.25]"};
}

// Closed-form fixed point against 50-digit arithmetic and the numerical root.
Outcome bound_formulas() {
    double worst_rel = 0.0, lo_ratio = INFINITY, hi_ratio = 0.0;
    int points = 0;
    for (double B : {0.5, 1.0, 4.0, 16.0, 64.0})
        for (std::size_t P : {5u, 50u, 500u, 2000u, 5000u})
            for (double n : {1e5, 1e8}) {
                BoundInputs in;
                in.B = B;
                in.P = P;
                in.n = n;
                in.L_ell = 2.0;
                const HighPrecision hb = B, hp = static_cast<double>(P), hn = n, hl = in.L_ell, hc = in.C_univ;
                const double oracle =
                    HighPrecision(288 * hb * hb * hp / hn * (log(hc * hn * hl * hl / hp) + 1)).convert_to<double>();
                worst_rel = std::max(worst_rel, std::abs(r_star_closed_form(in) / oracle - 1.0));
                const FixedPoint fp = psi_and_fixed_point(in);
                lo_ratio = std::min(lo_ratio, fp.r_root / fp.r_star);
                hi_ratio = std::max(hi_ratio, fp.r_root / fp.r_star);
                ++points;
            }
    const bool identity = kLocalRadConstant * kFixedPointConstant == 203040;
    return {worst_rel <= 1e-10 && identity && lo_ratio >= 1.0 / 3.0 && hi_ratio <= 3.0,
            std::to_string(points) + " points, max rel error " + fmt("%.2g", worst_rel) + ", root/closed in [" +
                fmt("%.3f", lo_ratio) + ", " + fmt("%.3f", hi_ratio) + "], 705*288 = 203040 " +
                (identity ? "exact" : "MISMATCH")};
}

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j);
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

// Monte-Carlo localized Rademacher estimate sandwiched under the entropy bound.
Outcome rademacher_sandwich() {
    NetArchitecture arch;
    arch.hidden = {8};
    arch.V = 2.0;
    RngStream rng(6, 0xAC6);
    const auto center = VelocityNet::initialized(arch, rng);
    const auto data =
        draw_coupled(rng, DistributionSpec::gaussian({0.0}, 1.0), DistributionSpec::gaussian({2.0}, 1.0), 256);
    BoundInputs in;
    in.P = arch.parameter_count();
    in.n = 256;
    in.L_ell = lipschitz_report(arch, truncation_level(std::sqrt(2.0), 256, 2.0, 0.5)).L_ell;
    in.arch = {arch.b, arch.V, arch.L_phi, arch.depth()};
    RademacherOptions opts;
    opts.jobs = worker_count();
    std::vector<double> rs, est;
    std::size_t violations = 0;
    for (int k = 0; k < 10; ++k) {
        const double r = std::pow(10.0, -4.0 + 0.5 * k);
        RngStream est_rng(6, 100 + static_cast<std::uint64_t>(k));
        const double value = empirical_local_rademacher(center, data, r, in.L_ell, opts, est_rng).mean;
        if (!(value <= dudley_local_rad(in, r).value)) ++violations;
        rs.push_back(r);
        est.push_back(value);
    }
    const double rho = spearman(rs, est);
    return {violations == 0 && rho >= 0.9, "P = " + std::to_string(in.P) + ", n = 256, " + std::to_string(violations) +
                                               " of 10 above the entropy bound, Spearman " + fmt("%.3f", rho)};
}

// Two-point construction at three separations.
Outcome lower_bound() {
    bool all = true;
    std::string detail;
    for (double R : {8.0, 10.0, 16.0}) {
        const auto inst = LowerBoundInstance::make(1.0, R, 0.1, 1.0);
        const auto tv = tv_distance_mixtures(inst);
        const auto sep = separation_on_interval(inst);
        double weight_dev = 0.0;
        bool in_range = true;
        for (int i = 0; i <= 3000; ++i) {
            const double x = -3.0 * R + 6.0 * R * i / 3000.0;
            for (int h : {1, 2}) {
                const auto p = mixture_posterior_velocity(inst, h, x);
                in_range = in_range && p.weight_background >= 0.0 && p.weight_background <= 1.0 &&
                           p.weight_shifted >= 0.0 && p.weight_shifted <= 1.0;
                weight_dev = std::max(weight_dev, std::abs(p.weight_background + p.weight_shifted - 1.0));
            }
        }
        const bool ok = tv.converged && tv.value <= inst.eta * (1.0 + kQuadratureTolerance) && sep.passes && in_range && weight_dev <= 1e-12;
        all = all && ok;
        detail += "R=" + fmt("%g", R) + ": TV/eta " + fmt("%.3f", tv.value / inst.eta) + ", min sep " +
                  fmt("%.3f", sep.ratio_to_R) + "R" + (ok ? "" : " [fail]") + "; ";
    }
    detail.resize(detail.size() - 2);
    return {all, detail};
}

// Diminishing-step SGD on a noisy quadratic.
Outcome sgd_rate() {
    const QuadraticProblem problem{{1.0, 2.0, 4.0, 8.0}, 1.0, 1.0};
    SgdRateConfig cfg;
    cfg.c = 2.0;
    cfg.gamma = 16.0;
    cfg.steps = 20000;
    cfg.seeds = 20;
    const auto rep = sgd_rate_check(problem, cfg);
    return {rep.slope >= -1.3 && rep.slope <= -0.7 && rep.worst_envelope_ratio <= 1.5,
            "slope " + fmt("%.3f", rep.slope) + " in [-1.3, -0.7], max gap/envelope " +
                fmt("%.3f", rep.worst_envelope_ratio) + " (<= 1.5)"};
}

// One reflow round on the two-component mixture.
Outcome reflow_round() {
    const ExperimentConfig cfg = preset(Task::mixture_2d);
    int improved = 0;
    bool frozen = true;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto model = train_model(cfg, seed);
        const auto study = reflow_study(cfg, model.net, 1, seed);
        const auto& a = study.rounds[0];
        const auto& b = study.rounds[1];
        const bool ok = b.straightness < a.straightness && b.one_step_w2 <= a.one_step_w2;
        improved += ok;
        frozen = frozen && study.target_draws_after == study.target_draws_before;
        per_seed += ok ? '+' : '-';
    }
    return {improved >= 8 && frozen,
            std::to_string(improved) + " of 10 seeds improved [" + per_seed + "], target counter " +
                (frozen ? "frozen" : "MOVED")};
}

// Fraction of displacements beyond the truncation level.
Outcome truncation() {
    const auto pi0 = DistributionSpec::gaussian({0.0}, 1.0);
    const auto pi1 = DistributionSpec::gaussian({2.0}, 1.0);
    const std::size_t n = 10000;
    const TailConstants tail;
    const double sigma = displacement_sigma(pi0, pi1);
    const double M = truncation_level(sigma, n, tail.C, tail.c);
    RngStream rng(10, 0xACA);
    const auto data = draw_coupled(rng, pi0, pi1, n);
    const double frac = tail_fraction(data, M).fraction;
    const double delta_n = 1.0 / (2.0 * static_cast<double>(n) * static_cast<double>(n));
    const double limit = 5.0 * delta_n * static_cast<double>(n);
    return {frac <= limit, "M = " + fmt("%.3f", M) + ", fraction " + fmt("%.2g", frac) + " <= " + fmt("%.2g", limit)};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

// Sweep CSV bytes across reruns and worker counts.
Outcome determinism() {
    const char* config = R"({
  "task": "gaussian_1d",
  "arch": {"hidden": [6]},
  "train": {"steps": 150, "batch_size": 16},
  "sweep": {"grid": [16, 32, 64, 128, 256, 512], "trials": 3, "n_reference": 1024, "reference_steps": 300,
            "n_holdout": 256, "n_eval": 256, "n_mc": 256, "euler_steps": 20, "polish_steps": 20},
  "seed": 5
})";
    const fs::path work = fs::absolute("acceptance_work");
    fs::create_directories(work);
    std::ofstream(work / "sweep.json") << config;
    std::vector<std::string> csvs;
#ifdef RFLOW_CLI_PATH
    for (const auto& [tag, jobs] : std::vector<std::pair<std::string, int>>{{"a", 1}, {"b", 1}, {"c", 8}, {"d", 8}}) {
        const fs::path out = work / tag;
        const std::string cmd = std::string(RFLOW_CLI_PATH) + " --config " + (work / "sweep.json").string() + " --jobs " +
                                std::to_string(jobs) + " --out " + out.string() + " sweep > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "sweep command failed"};
        csvs.push_back(slurp(out / "sweep.csv") + slurp(out / "rate_fit.json"));
    }
    const std::string how = "command line";
#else
    const auto cfg = experiment_from_json(Json::parse(config));
    for (std::size_t jobs : {1u, 1u, 8u, 8u}) {
        std::ostringstream s;
        write_sweep_csv(s, run_sweep(cfg, jobs, false));
        csvs.push_back(s.str());
    }
    const std::string how = "library";
#endif
    const bool same = std::all_of(csvs.begin(), csvs.end(), [&](const std::string& c) { return c == csvs.front(); });
    return {same && !csvs.front().empty(),
            how + " sweep, jobs 1,1,8,8: outputs " + (same ? "byte-identical" : "DIFFER")};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "gradient correctness", 10, gradients},
        {2, "oracle fidelity", 60, oracle_fidelity},
        {3, "excess-risk rate", 900, excess_rate},
        {4, "Wasserstein rate", 900, w2_rate},
        {5, "bound formulas", 5, bound_formulas},
        {6, "Rademacher sandwich", 300, rademacher_sandwich},
        {7, "two-point lower bound", 10, lower_bound},
        {8, "SGD rate", 30, sgd_rate},
        {9, "reflow", 300, reflow_round},
        {10, "truncation", 5, truncation},
        {11, "determinism", 600, determinism},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= c.time_limit_s;
        const bool pass = o.pass && in_time;
        failures += !pass;
        std::printf("[%s] %2d %s: %s; %.1f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    o.detail.c_str(), secs, c.time_limit_s, in_time ? "" : " [too slow]");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
