#include "rflow/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace rflow {

std::string to_string(Task t) {
    switch (t) {
        case Task::gaussian_1d: return "gaussian_1d";
        case Task::gaussian_2d: return "gaussian_2d";
        case Task::mixture_2d: return "mixture_2d";
        case Task::lowerbound: return "lowerbound";
    }
    return "unknown";
}

Task task_from_string(const std::string& name) {
    for (Task t : {Task::gaussian_1d, Task::gaussian_2d, Task::mixture_2d, Task::lowerbound})
        if (to_string(t) == name) return t;
    throw ConfigError("task", "unknown task '" + name + "' (expected gaussian_1d, gaussian_2d, mixture_2d or lowerbound)");
}

ExperimentConfig preset(Task task) {
    ExperimentConfig cfg;
    cfg.task = task;
    cfg.arch.hidden = {16};
    cfg.arch.V = 8.0;
    cfg.arch.b = 1.0;
    cfg.train.batch_size = 64;
    cfg.train.steps = 3000;
    cfg.train.schedule = StepSchedule::constant;
    cfg.train.eta = 0.05;
    cfg.train.kappa_hat = 10.0;
    cfg.train.n_samples = 1024;
    switch (task) {
        case Task::gaussian_1d:
            cfg.sweep.warm_start = true;
            cfg.sweep.polish_steps = 500;
            cfg.sweep.polish_eta = 0.1;
            break;
        case Task::lowerbound:
            break;
        case Task::gaussian_2d:
            cfg.pi0 = DistributionSpec::gaussian({0.0, 0.0}, 1.0);
            cfg.pi1 = DistributionSpec::gaussian({2.0, -1.0}, 1.0);
            cfg.arch.dim = 2;
            cfg.arch.hidden = {24};
            cfg.sweep.n_eval = 512;
            break;
        case Task::mixture_2d:
            cfg.pi0 = DistributionSpec::gaussian({0.0, 0.0}, 1.0);
            cfg.pi1 = DistributionSpec::mixture({{0.5, {-2.0, 0.0}, 0.5}, {0.5, {2.0, 0.0}, 0.5}});
            cfg.arch.dim = 2;
            cfg.arch.hidden = {32, 32};
            cfg.train.n_samples = 4096;
            cfg.train.steps = 4000;
            cfg.sweep.n_eval = 512;
            cfg.sample.n_synth = 4096;
            break;
    }
    cfg.bounds = BoundInputs::from_architecture(cfg.arch, 1.0, 1e4, 4.0);
    return cfg;
}

void ExperimentConfig::validate() const {
    auto wrap = [](const std::string& field, auto&& f) {
        try {
            f();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(field, e.what());
        }
    };
    wrap("pi0", [&] { pi0.validate(); });
    wrap("pi1", [&] { pi1.validate(); });
    wrap("arch", [&] { arch.validate(); });
    wrap("train", [&] { train.validate(); });
    if (task != Task::lowerbound) {
        if (pi0.dim() != pi1.dim()) throw ConfigError("pi1", "dimension differs from pi0");
        if (arch.dim != pi0.dim()) throw ConfigError("arch.dim", "must equal the distribution dimension");
    }
    if (sweep.grid.empty()) throw ConfigError("sweep.grid", "must not be empty");
    if (!std::is_sorted(sweep.grid.begin(), sweep.grid.end()) ||
        std::adjacent_find(sweep.grid.begin(), sweep.grid.end()) != sweep.grid.end())
        throw ConfigError("sweep.grid", "must be strictly ascending");
    if (sweep.grid.front() < 2) throw ConfigError("sweep.grid", "sample sizes must be at least 2");
    if (sweep.trials < 1) throw ConfigError("sweep.trials", "must be at least 1");
    if (sweep.euler_steps < 1) throw ConfigError("sweep.euler_steps", "must be at least 1");
    if (sweep.n_eval < 2 || sweep.n_holdout < 2 || sweep.n_mc < 2 || sweep.n_reference < 2)
        throw ConfigError("sweep", "evaluation sizes must be at least 2");
    if (sample.steps < 1) throw ConfigError("sample.steps", "must be at least 1");
    wrap("bounds", [&] { bounds.validate(); });
    wrap("lowerbound", [&] {
        LowerBoundInstance::make(lowerbound.sigma, lowerbound.R, lowerbound.epsilon, lowerbound.c_interval);
    });
    if (!(lowerbound.x_hi > lowerbound.x_lo) || lowerbound.grid_points < 2)
        throw ConfigError("lowerbound", "grid needs x_hi > x_lo and at least 2 points");
    if (out_dir.empty()) throw ConfigError("out_dir", "must not be empty");
}

namespace {

std::vector<std::size_t> counts_from_json(const Json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of integers");
    std::vector<std::size_t> out;
    for (const auto& v : j) {
        if (!v.is_number_unsigned()) throw ConfigError(path, "expected an array of integers");
        out.push_back(v.get<std::size_t>());
    }
    return out;
}

std::uint64_t get_u64(const Json& j, const std::string& key, const std::string& path, std::uint64_t fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number_unsigned()) throw ConfigError(path.empty() ? key : path + "." + key, "expected a non-negative integer");
    return it->get<std::uint64_t>();
}

const Json& object_or_empty(const Json& j, const std::string& key) {
    static const Json empty = Json::object();
    const auto it = j.find(key);
    if (it == j.end()) return empty;
    if (!it->is_object()) throw ConfigError(key, "expected an object");
    return *it;
}

}  // namespace

ExperimentConfig experiment_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
    const Json& task_j = require_field(j, "task", "");
    if (!task_j.is_string()) throw ConfigError("task", "expected a string");
    ExperimentConfig cfg = preset(task_from_string(task_j.get<std::string>()));

    if (j.contains("pi0")) cfg.pi0 = distribution_from_json(j["pi0"], "pi0");
    if (j.contains("pi1")) cfg.pi1 = distribution_from_json(j["pi1"], "pi1");
    if (j.contains("arch")) cfg.arch = architecture_from_json(j["arch"], "arch", cfg.arch);
    cfg.train = train_config_from_json(require_field(j, "train", ""), "train", cfg.train);

    const Json& sw = object_or_empty(j, "sweep");
    if (sw.contains("grid")) cfg.sweep.grid = counts_from_json(sw["grid"], "sweep.grid");
    cfg.sweep.trials = get_count(sw, "trials", "sweep", cfg.sweep.trials);
    cfg.sweep.base_seed = get_u64(sw, "base_seed", "sweep", cfg.sweep.base_seed);
    cfg.sweep.n_reference = get_count(sw, "n_reference", "sweep", cfg.sweep.n_reference);
    cfg.sweep.reference_steps = get_count(sw, "reference_steps", "sweep", cfg.sweep.reference_steps);
    cfg.sweep.n_holdout = get_count(sw, "n_holdout", "sweep", cfg.sweep.n_holdout);
    cfg.sweep.n_eval = get_count(sw, "n_eval", "sweep", cfg.sweep.n_eval);
    cfg.sweep.euler_steps = get_count(sw, "euler_steps", "sweep", cfg.sweep.euler_steps);
    cfg.sweep.n_mc = get_count(sw, "n_mc", "sweep", cfg.sweep.n_mc);
    cfg.sweep.polish_steps = get_count(sw, "polish_steps", "sweep", cfg.sweep.polish_steps);
    cfg.sweep.polish_eta = get_number(sw, "polish_eta", "sweep", cfg.sweep.polish_eta);
    if (const auto it = sw.find("warm_start"); it != sw.end()) {
        if (!it->is_boolean()) throw ConfigError("sweep.warm_start", "expected true or false");
        cfg.sweep.warm_start = it->get<bool>();
    }

    const Json& sa = object_or_empty(j, "sample");
    cfg.sample.steps = get_count(sa, "steps", "sample", cfg.sample.steps);
    cfg.sample.count = get_count(sa, "count", "sample", cfg.sample.count);
    cfg.sample.reflow_rounds = get_count(sa, "reflow_rounds", "sample", cfg.sample.reflow_rounds);
    cfg.sample.n_synth = get_count(sa, "n_synth", "sample", cfg.sample.n_synth);
    cfg.sample.trajectories = get_count(sa, "trajectories", "sample", cfg.sample.trajectories);
    cfg.sample.straightness_probes = get_count(sa, "straightness_probes", "sample", cfg.sample.straightness_probes);

    if (j.contains("bounds")) cfg.bounds = bound_inputs_from_json(j["bounds"], "bounds", cfg.bounds);

    const Json& lb = object_or_empty(j, "lowerbound");
    cfg.lowerbound.sigma = get_number(lb, "sigma", "lowerbound", cfg.lowerbound.sigma);
    cfg.lowerbound.R = get_number(lb, "R", "lowerbound", cfg.lowerbound.R);
    cfg.lowerbound.epsilon = get_number(lb, "epsilon", "lowerbound", cfg.lowerbound.epsilon);
    cfg.lowerbound.c_interval = get_number(lb, "c_interval", "lowerbound", cfg.lowerbound.c_interval);
    cfg.lowerbound.x_lo = get_number(lb, "x_lo", "lowerbound", cfg.lowerbound.x_lo);
    cfg.lowerbound.x_hi = get_number(lb, "x_hi", "lowerbound", cfg.lowerbound.x_hi);
    cfg.lowerbound.grid_points = get_count(lb, "grid_points", "lowerbound", cfg.lowerbound.grid_points);
    cfg.lowerbound.m = get_count(lb, "m", "lowerbound", cfg.lowerbound.m);

    cfg.seed = get_u64(j, "seed", "", cfg.seed);
    if (const auto it = j.find("out_dir"); it != j.end()) {
        if (!it->is_string()) throw ConfigError("out_dir", "expected a string");
        cfg.out_dir = it->get<std::string>();
    }
    cfg.validate();
    return cfg;
}

Json to_json(const ExperimentConfig& cfg) {
    const auto& s = cfg.sweep;
    const auto& sa = cfg.sample;
    const auto& lb = cfg.lowerbound;
    return {
        {"task", to_string(cfg.task)},
        {"pi0", to_json(cfg.pi0)},
        {"pi1", to_json(cfg.pi1)},
        {"arch", to_json(cfg.arch)},
        {"train", to_json(cfg.train)},
        {"sweep",
         {{"grid", s.grid}, {"trials", s.trials}, {"base_seed", s.base_seed}, {"n_reference", s.n_reference},
          {"reference_steps", s.reference_steps}, {"n_holdout", s.n_holdout}, {"n_eval", s.n_eval},
          {"euler_steps", s.euler_steps}, {"n_mc", s.n_mc}, {"polish_steps", s.polish_steps},
          {"polish_eta", s.polish_eta}, {"warm_start", s.warm_start}}},
        {"sample",
         {{"steps", sa.steps}, {"count", sa.count}, {"reflow_rounds", sa.reflow_rounds}, {"n_synth", sa.n_synth},
          {"trajectories", sa.trajectories}, {"straightness_probes", sa.straightness_probes}}},
        {"bounds", to_json(cfg.bounds)},
        {"lowerbound",
         {{"sigma", lb.sigma}, {"R", lb.R}, {"epsilon", lb.epsilon}, {"c_interval", lb.c_interval},
          {"x_lo", lb.x_lo}, {"x_hi", lb.x_hi}, {"grid_points", lb.grid_points}, {"m", lb.m}}},
        {"seed", cfg.seed},
        {"out_dir", cfg.out_dir},
    };
}

std::optional<GaussianPairSpec> gaussian_pair(const DistributionSpec& pi0, const DistributionSpec& pi1) {
    const auto* g0 = std::get_if<GaussianSpec>(&pi0.kind);
    const auto* g1 = std::get_if<GaussianSpec>(&pi1.kind);
    if (!g0 || !g1) return std::nullopt;
    return GaussianPairSpec{g0->mean, g1->mean, g0->std, g1->std};
}

std::uint64_t trial_seed(std::uint64_t base_seed, std::size_t n, std::size_t trial) {
    std::uint64_t s = base_seed ^ (static_cast<std::uint64_t>(n) * 0x9E3779B97F4A7C15ULL) ^
                      (static_cast<std::uint64_t>(trial) * 0xD1B54A32D192ED03ULL);
    return splitmix64(s);
}

namespace {

// Minibatch phase then an optional full-batch polish toward the empirical minimizer.
VelocityNet fit(VelocityNet net, std::span<const CoupledSample> data, const TrainConfig& base, std::size_t steps,
                std::size_t polish_steps, double polish_eta, std::uint64_t seed) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    cfg.steps = steps;
    cfg.n_samples = 0;
    cfg.batch_size = std::min(cfg.batch_size, data.size());
    net = train(std::move(net), data, cfg).net;
    if (polish_steps > 0) {
        TrainConfig polish;
        polish.batch_size = data.size();
        polish.steps = polish_steps;
        polish.schedule = StepSchedule::constant;
        polish.eta = polish_eta;
        polish.kappa_hat = 1.0 / polish_eta;
        polish.seed = seed ^ 0x706f6c6973ULL;
        net = train(std::move(net), data, polish).net;
    }
    return net;
}

std::vector<Vec> pushforward(const VelocityNet& net, std::span<const Vec> z0, std::size_t steps) {
    const VelocityField field = field_of(net);
    std::vector<Vec> out;
    out.reserve(z0.size());
    for (const auto& z : z0) out.push_back(euler_terminal(field, z, steps));
    return out;
}

double w2_between(std::span<const Vec> a, std::span<const Vec> b) {
    if (a.front().size() == 1) {
        std::vector<double> xa, xb;
        for (const auto& v : a) xa.push_back(v[0]);
        for (const auto& v : b) xb.push_back(v[0]);
        return w2_empirical_1d(xa, xb);
    }
    return w2_empirical_assignment(a, b);
}

struct SweepShared {
    VelocityNet reference{NetArchitecture{}};
    std::vector<CoupledSample> holdout;
    std::vector<Vec> z0_eval;
    std::vector<Vec> y_eval;
    double w2_baseline = 0.0;
    std::optional<GaussianPairSpec> oracle;
};

SweepRow run_trial(const ExperimentConfig& cfg, const SweepShared& shared, std::size_t n, std::size_t trial,
                   bool timing) {
    SweepRow row;
    row.n = n;
    row.trial = trial;
    row.seed = trial_seed(cfg.sweep.base_seed, n, trial);
    const auto start = std::chrono::steady_clock::now();
    try {
        RngStream rng(row.seed, 0);
        Source pi0(cfg.pi0), pi1(cfg.pi1);
        const auto data = draw_coupled(rng, pi0, pi1, n);
        RngStream init_rng = rng.split(1);
        // Warm-started trials skip the minibatch phase and descend on the full
        // batch from the proxy, i.e. they compute the empirical minimizer near it.
        VelocityNet net = cfg.sweep.warm_start ? shared.reference : VelocityNet::initialized(cfg.arch, init_rng);
        const std::size_t sgd_steps = cfg.sweep.warm_start ? 0 : cfg.train.steps;
        net = fit(std::move(net), data, cfg.train, sgd_steps, cfg.sweep.polish_steps, cfg.sweep.polish_eta, row.seed);

        row.excess_risk = excess_risk(field_of(net), field_of(shared.reference), shared.holdout).value;
        if (shared.oracle) {
            RngStream mc = rng.split(2);
            row.vel_l2 = velocity_l2_error(field_of(net), *shared.oracle, cfg.sweep.n_mc, mc).value;
        } else {
            row.vel_l2 = std::numeric_limits<double>::quiet_NaN();
        }
        row.w2 = w2_between(pushforward(net, shared.z0_eval, cfg.sweep.euler_steps), shared.y_eval);
        row.w2_baseline = shared.w2_baseline;
    } catch (const NumericError& e) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.excess_risk = row.vel_l2 = row.w2 = nan;
        row.w2_baseline = shared.w2_baseline;
        row.status = "diverged";
    }
    if (timing)
        row.runtime_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return row;
}

}  // namespace

TrainResult train_model(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.task == Task::lowerbound) throw ConfigError("task", "the lowerbound task has no model to train");
    if (cfg.train.n_samples == 0) throw ConfigError("train.n_samples", "must be positive for training");
    RngStream rng(seed, 0);
    Source pi0(cfg.pi0), pi1(cfg.pi1);
    const auto data = draw_coupled(rng, pi0, pi1, cfg.train.n_samples);
    RngStream init_rng = rng.split(1);
    VelocityNet net = VelocityNet::initialized(cfg.arch, init_rng);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    tc.n_samples = 0;
    tc.batch_size = std::min(tc.batch_size, data.size());
    return train(std::move(net), data, tc);
}

SweepResult run_sweep(const ExperimentConfig& cfg, std::size_t jobs, bool timing) {
    cfg.validate();
    if (cfg.task == Task::lowerbound) throw ConfigError("task", "the lowerbound task has no sweep");
    const std::size_t d = cfg.pi0.dim();

    SweepShared shared;
    shared.oracle = gaussian_pair(cfg.pi0, cfg.pi1);
    RngStream root(cfg.sweep.base_seed, 0x5357454550ULL);
    {
        RngStream ref_rng = root.split(1);
        Source pi0(cfg.pi0), pi1(cfg.pi1);
        const auto ref_data = draw_coupled(ref_rng, pi0, pi1, cfg.sweep.n_reference);
        RngStream init_rng = root.split(2);
        VelocityNet net = VelocityNet::initialized(cfg.arch, init_rng);
        shared.reference = fit(std::move(net), ref_data, cfg.train, cfg.sweep.reference_steps,
                               cfg.sweep.polish_steps, cfg.sweep.polish_eta, cfg.sweep.base_seed);
        RngStream hold_rng = root.split(3);
        shared.holdout = draw_coupled(hold_rng, cfg.pi0, cfg.pi1, cfg.sweep.n_holdout);
    }
    const std::size_t n_eval = d == 1 ? cfg.sweep.n_eval : std::min(cfg.sweep.n_eval, kMaxAssignmentSize);
    RngStream eval_rng = root.split(4);
    for (std::size_t i = 0; i < n_eval; ++i) shared.z0_eval.push_back(sample(cfg.pi0, eval_rng));
    for (std::size_t i = 0; i < n_eval; ++i) shared.y_eval.push_back(sample(cfg.pi1, eval_rng));
    shared.w2_baseline = w2_between(pushforward(shared.reference, shared.z0_eval, cfg.sweep.euler_steps), shared.y_eval);

    std::vector<std::pair<std::size_t, std::size_t>> keys;
    for (std::size_t n : cfg.sweep.grid)
        for (std::size_t t = 0; t < cfg.sweep.trials; ++t) keys.emplace_back(n, t);

    // Largest n first so the long trials start early; rows are stored by key index.
    std::vector<std::size_t> order(keys.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = keys.size() - 1 - i;

    SweepResult result;
    result.rows.resize(keys.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < order.size(); k = next++) {
            const std::size_t idx = order[k];
            result.rows[idx] = run_trial(cfg, shared, keys[idx].first, keys[idx].second, timing);
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(jobs, 1, keys.size());
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Per-n means over successful trials.
    std::vector<std::pair<double, double>> excess_grid;
    for (std::size_t n : cfg.sweep.grid) {
        double sum_e = 0.0, sum_w2 = 0.0;
        std::size_t ok = 0;
        for (const auto& r : result.rows)
            if (r.n == n && r.status == "ok") {
                sum_e += r.excess_risk;
                sum_w2 += r.w2 * r.w2;
                ++ok;
            }
        if (ok == 0) continue;
        const double mean_e = sum_e / static_cast<double>(ok);
        const double mean_w2sq = sum_w2 / static_cast<double>(ok);
        if (mean_e > 0.0) excess_grid.emplace_back(static_cast<double>(n), mean_e);
        const double excess_w2 = mean_w2sq - shared.w2_baseline * shared.w2_baseline;
        if (excess_w2 > 0.0) result.w2_corrected.emplace_back(static_cast<double>(n), std::sqrt(excess_w2));
    }
    if (excess_grid.size() >= 4) result.excess_fit = fit_rate(excess_grid);
    if (result.w2_corrected.size() >= 4) result.w2_fit = fit_rate(result.w2_corrected);
    result.reference_loss = empirical_loss(shared.reference, shared.holdout);
    return result;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
    out << "n,trial,seed,excess_risk,vel_l2,w2,w2_baseline,runtime_ms,status\n";
    std::ostringstream line;
    line.precision(17);
    for (const auto& r : result.rows) {
        line.str("");
        line << r.n << ',' << r.trial << ',' << r.seed << ',' << r.excess_risk << ',' << r.vel_l2 << ',' << r.w2 << ','
             << r.w2_baseline << ',' << r.runtime_ms << ',' << r.status << '\n';
        out << line.str();
    }
}

namespace {

Json fit_json(const std::optional<RateFit>& fit) {
    if (!fit) return nullptr;
    Json grid = Json::array();
    for (const auto& [n, v] : fit->grid) grid.push_back({n, v});
    return {{"slope", fit->slope},
            {"intercept", fit->intercept},
            {"slope_std_error", fit->slope_std_error},
            {"r_squared", fit->r_squared},
            {"grid", grid}};
}

}  // namespace

Json rate_fit_json(const SweepResult& result) {
    std::size_t failed = 0;
    for (const auto& r : result.rows) failed += r.status != "ok";
    return {{"excess_risk", fit_json(result.excess_fit)},
            {"w2_corrected", fit_json(result.w2_fit)},
            {"w2_baseline", result.rows.empty() ? 0.0 : result.rows.front().w2_baseline},
            {"reference_holdout_loss", result.reference_loss},
            {"rows", result.rows.size()},
            {"failed_rows", failed}};
}

std::string sweep_plot_script(const std::string& csv_name) {
    std::ostringstream s;
    s << "#!/usr/bin/env python3\n"
         "# Plots per-n means of the sweep CSV on log-log axes.\n"
         "import sys\n"
         "import pandas as pd\n"
         "import matplotlib\n"
         "matplotlib.use(\"Agg\")\n"
         "import matplotlib.pyplot as plt\n\n"
         "path = sys.argv[1] if len(sys.argv) > 1 else \""
      << csv_name
      << "\"\n"
         "df = pd.read_csv(path, comment=\"#\")\n"
         "df = df[df.status == \"ok\"]\n"
         "g = df.groupby(\"n\").mean(numeric_only=True)\n"
         "fig, ax = plt.subplots(1, 2, figsize=(9, 4))\n"
         "ax[0].loglog(g.index, g.excess_risk, \"o-\", label=\"excess risk\")\n"
         "ax[0].loglog(g.index, g.excess_risk.iloc[0] * g.index[0] / g.index, \"k--\", label=\"1/n\")\n"
         "ax[0].set_xlabel(\"n\")\n"
         "ax[0].legend()\n"
         "corr = (g.w2 ** 2 - g.w2_baseline ** 2).clip(lower=1e-12) ** 0.5\n"
         "ax[1].loglog(g.index, corr, \"o-\", label=\"corrected W2\")\n"
         "ax[1].loglog(g.index, corr.iloc[0] * (g.index[0] / g.index) ** 0.5, \"k--\", label=\"n^-1/2\")\n"
         "ax[1].set_xlabel(\"n\")\n"
         "ax[1].legend()\n"
         "fig.tight_layout()\n"
         "fig.savefig(path.rsplit(\".\", 1)[0] + \".png\", dpi=120)\n";
    return s.str();
}

ReflowStudy reflow_study(const ExperimentConfig& cfg, const VelocityNet& initial, std::size_t rounds,
                         std::uint64_t seed) {
    if (initial.arch().dim != cfg.pi0.dim()) throw ConfigError("arch.dim", "model dimension differs from pi0");
    RngStream rng(seed, 0x5245464cULL);
    Source pi0(cfg.pi0), pi1(cfg.pi1);

    RngStream eval_rng = rng.split(1);
    const std::size_t n_eval = std::min<std::size_t>(cfg.sample.count, kMaxAssignmentSize);
    std::vector<Vec> z0_eval, y_eval, probes;
    for (std::size_t i = 0; i < n_eval; ++i) z0_eval.push_back(pi0.draw(eval_rng));
    for (std::size_t i = 0; i < n_eval; ++i) y_eval.push_back(pi1.draw(eval_rng));
    for (std::size_t i = 0; i < cfg.sample.straightness_probes; ++i) probes.push_back(pi0.draw(eval_rng));

    auto measure = [&](std::size_t round, const VelocityNet& net) {
        ReflowRound r;
        r.round = round;
        const VelocityField field = field_of(net);
        r.straightness = mean_straightness(field, probes, cfg.sample.steps);
        std::vector<Vec> one_step;
        for (const auto& z : z0_eval) one_step.push_back(one_step_sample(field, z));
        r.one_step_w2 = w2_between(one_step, y_eval);
        return r;
    };

    ReflowStudy study;
    study.rounds.push_back(measure(0, initial));
    study.target_draws_before = pi1.draws();
    ReflowState state{0, initial, {}};
    ReflowOptions opt;
    opt.n_synth = cfg.sample.n_synth;
    opt.euler_steps = cfg.sample.steps;
    opt.train = cfg.train;
    opt.train.batch_size = std::min(opt.train.batch_size, opt.n_synth);
    for (std::size_t k = 1; k <= rounds; ++k) {
        RngStream round_rng = rng.split(100 + k);
        opt.train.seed = trial_seed(seed, k, 0);
        state = reflow(state, pi0, opt, round_rng);
        study.rounds.push_back(measure(k, state.net));
    }
    study.target_draws_after = pi1.draws();
    study.final_net = state.net;
    return study;
}

}  // namespace rflow
