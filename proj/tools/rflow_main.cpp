#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rflow/experiment.hpp"

namespace fs = std::filesystem;
using namespace rflow;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct Globals {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::size_t jobs = 1;
    std::string out;
};

struct Context {
    ExperimentConfig cfg;
    std::string hash;
    fs::path out_dir;
};

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("out_dir", "cannot write " + path.string());
    f << content;
}

std::string csv_banner(const Context& ctx, const std::string& command) {
    return "# rflow " + version_string() + " command=" + command + " config_hash=" + ctx.hash + "\n";
}

Json stamped(Json j, const Context& ctx) {
    j["version"] = version_string();
    j["config_hash"] = ctx.hash;
    return j;
}

Context load_context(const Globals& g, bool config_required, Task fallback) {
    Context ctx;
    if (g.config_path.empty()) {
        if (config_required) throw ConfigError("--config", "a config file is required for this command");
        ctx.cfg = preset(fallback);
    } else {
        ctx.cfg = experiment_from_json(read_json_file(g.config_path));
    }
    if (g.seed_given) {
        ctx.cfg.seed = g.seed;
        ctx.cfg.sweep.base_seed = g.seed;
    }
    if (!g.out.empty()) ctx.cfg.out_dir = g.out;
    Json hashed = to_json(ctx.cfg);
    hashed.erase("out_dir");  // where results go does not change them
    ctx.hash = config_hash(hashed);
    ctx.out_dir = ctx.cfg.out_dir;
    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec || !fs::is_directory(ctx.out_dir))
        throw ConfigError("out_dir", "cannot create output directory " + ctx.out_dir.string());
    return ctx;
}

int cmd_train(const Globals& g) {
    const Context ctx = load_context(g, true, Task::gaussian_1d);
    const TrainResult result = train_model(ctx.cfg, ctx.cfg.seed);
    save_checkpoint((ctx.out_dir / "checkpoint.bin").string(),
                    Checkpoint{result.net, ctx.cfg.seed, ctx.cfg.train.steps, ctx.hash});
    std::ostringstream trace;
    trace << csv_banner(ctx, "train");
    result.trace.write_csv(trace);
    write_file(ctx.out_dir / "trace.csv", trace.str());
    const Json summary = stamped({{"seed", ctx.cfg.seed},
                                  {"P", result.net.parameter_count()},
                                  {"steps", ctx.cfg.train.steps},
                                  {"n_samples", ctx.cfg.train.n_samples},
                                  {"initial_loss", result.trace.initial_loss},
                                  {"final_loss", result.trace.final_loss},
                                  {"max_row_l1", result.net.max_row_l1()}},
                                 ctx);
    write_file(ctx.out_dir / "train.json", dump_json(summary));
    std::cout << "trained " << result.net.parameter_count() << " parameters, final loss " << result.trace.final_loss
              << " -> " << (ctx.out_dir / "checkpoint.bin").string() << "\n";
    return kExitOk;
}

struct SampleArgs {
    std::string checkpoint;
    std::size_t steps = 0;
    std::size_t count = 0;
    std::size_t reflow = 0;
    std::size_t trajectories = 0;
    bool steps_given = false, count_given = false, reflow_given = false, traj_given = false;
};

int cmd_sample(const Globals& g, const SampleArgs& a) {
    const Context ctx = load_context(g, true, Task::gaussian_1d);
    const fs::path ckpt_path = a.checkpoint.empty() ? ctx.out_dir / "checkpoint.bin" : fs::path(a.checkpoint);
    const Checkpoint ckpt = load_checkpoint(ckpt_path.string());
    const std::size_t steps = a.steps_given ? a.steps : ctx.cfg.sample.steps;
    const std::size_t count = a.count_given ? a.count : ctx.cfg.sample.count;
    const std::size_t rounds = a.reflow_given ? a.reflow : ctx.cfg.sample.reflow_rounds;
    const std::size_t n_traj = std::min(a.traj_given ? a.trajectories : ctx.cfg.sample.trajectories, count);
    if (steps == 0) throw ConfigError("--steps", "must be at least 1");
    if (ckpt.net.arch().dim != ctx.cfg.pi0.dim()) throw ConfigError("pi0", "dimension differs from the checkpoint");

    Json summary = {{"steps", steps}, {"count", count}, {"reflow_rounds", rounds}, {"checkpoint", ckpt_path.string()}};
    VelocityNet net = ckpt.net;
    if (rounds > 0) {
        ExperimentConfig cfg = ctx.cfg;
        cfg.sample.steps = steps;
        const ReflowStudy study = reflow_study(cfg, net, rounds, ctx.cfg.seed);
        std::ostringstream csv;
        csv << csv_banner(ctx, "sample") << "round,straightness,one_step_w2\n";
        csv.precision(17);
        Json per_round = Json::array();
        for (const auto& r : study.rounds) {
            csv << r.round << ',' << r.straightness << ',' << r.one_step_w2 << '\n';
            per_round.push_back({{"round", r.round}, {"straightness", r.straightness}, {"one_step_w2", r.one_step_w2}});
        }
        write_file(ctx.out_dir / "reflow.csv", csv.str());
        summary["reflow"] = per_round;
        summary["target_draws_before_reflow"] = study.target_draws_before;
        summary["target_draws_after_reflow"] = study.target_draws_after;
        net = study.final_net;
    }

    RngStream rng(ctx.cfg.seed, 0x53414d50ULL);
    const VelocityField field = field_of(net);
    std::ostringstream csv;
    csv << csv_banner(ctx, "sample") << "sample_id";
    for (std::size_t k = 0; k < net.arch().dim; ++k) csv << ",coord_" << k;
    csv << '\n';
    csv.precision(17);
    std::vector<FlowTrajectory> trajectories;
    for (std::size_t i = 0; i < count; ++i) {
        const Vec z0 = sample(ctx.cfg.pi0, rng);
        Vec z1;
        if (i < n_traj) {
            trajectories.push_back(euler_integrate(field, z0, steps));
            z1 = trajectories.back().terminal();
        } else {
            z1 = euler_terminal(field, z0, steps);
        }
        csv << i;
        for (double x : z1) csv << ',' << x;
        csv << '\n';
    }
    write_file(ctx.out_dir / "samples.csv", csv.str());
    if (!trajectories.empty()) {
        std::ostringstream tcsv;
        tcsv << csv_banner(ctx, "sample");
        write_trajectory_csv(tcsv, trajectories);
        write_file(ctx.out_dir / "trajectories.csv", tcsv.str());
    }
    write_file(ctx.out_dir / "sample.json", dump_json(stamped(summary, ctx)));
    std::cout << "wrote " << count << " samples to " << (ctx.out_dir / "samples.csv").string() << "\n";
    return kExitOk;
}

int cmd_sweep(const Globals& g, bool timing) {
    const Context ctx = load_context(g, true, Task::gaussian_1d);
    const auto& grid = ctx.cfg.sweep.grid;
    if (grid.size() < 5 || static_cast<double>(grid.back()) < std::pow(10.0, 1.5) * static_cast<double>(grid.front()))
        throw ConfigError("sweep.grid", "needs at least 5 sample sizes spanning 1.5 decades");
    const SweepResult result = run_sweep(ctx.cfg, g.jobs, timing);
    std::ostringstream csv;
    csv << csv_banner(ctx, "sweep");
    write_sweep_csv(csv, result);
    write_file(ctx.out_dir / "sweep.csv", csv.str());
    write_file(ctx.out_dir / "rate_fit.json", dump_json(stamped(rate_fit_json(result), ctx)));
    write_file(ctx.out_dir / "plot_sweep.py", sweep_plot_script("sweep.csv"));
    if (result.excess_fit) std::cout << "excess-risk slope " << result.excess_fit->slope << "\n";
    if (result.w2_fit) std::cout << "corrected W2 slope " << result.w2_fit->slope << "\n";
    return kExitOk;
}

int cmd_bounds(const Globals& g) {
    const Context ctx = load_context(g, true, Task::gaussian_1d);
    const BoundReport rep = evaluate_bounds(ctx.cfg.bounds);
    write_file(ctx.out_dir / "bounds.json", dump_json(stamped(to_json(rep), ctx)));
    std::ostringstream csv;
    csv << csv_banner(ctx, "bounds") << "quantity,value\n";
    csv.precision(17);
    const std::vector<std::pair<std::string, double>> rows = {
        {"B", rep.B},
        {"C_univ", rep.inputs.C_univ},
        {"log_covering", rep.log_covering},
        {"dudley", rep.dudley.value},
        {"r_star", rep.r_star},
        {"r_root", rep.r_root},
        {"excess_bound", rep.excess.value},
        {"stat_bound", rep.sample.stat},
        {"n_required", static_cast<double>(rep.sample.n_required)},
        {"M_trunc", rep.truncation.M},
        {"delta_n", rep.truncation.delta_n},
        {"constant_identity", rep.constant_identity ? 1.0 : 0.0},
    };
    for (const auto& [k, v] : rows) csv << k << ',' << v << '\n';
    write_file(ctx.out_dir / "bounds.csv", csv.str());
    std::cout << "r* = " << rep.r_star << ", n_required = " << rep.sample.n_required << "\n";
    if (!rep.side_condition_ok) {
        std::cerr << "precondition violated: 2n > exp(x_conf) does not hold\n";
        return kExitConfig;
    }
    if (!rep.sample.satisfiable) std::cerr << "note: " << rep.sample.message << "\n";
    return kExitOk;
}

int cmd_lowerbound(const Globals& g) {
    const Context ctx = load_context(g, true, Task::lowerbound);
    const auto& s = ctx.cfg.lowerbound;
    const LowerBoundInstance inst = LowerBoundInstance::make(s.sigma, s.R, s.epsilon, s.c_interval);
    std::ostringstream csv;
    csv << csv_banner(ctx, "lowerbound");
    write_lowerbound_csv(csv, inst, s.x_lo, s.x_hi, s.grid_points);
    write_file(ctx.out_dir / "lowerbound.csv", csv.str());

    const QuadratureResult tv = tv_distance_mixtures(inst);
    const SeparationCheck sep = separation_on_interval(inst);
    const LeCamReport lecam = lecam_budget(inst, s.m);
    double weight_dev = 0.0, symmetry_dev = 0.0;
    for (std::size_t i = 0; i < s.grid_points; ++i) {
        const double x = s.x_lo + (s.x_hi - s.x_lo) * static_cast<double>(i) / static_cast<double>(s.grid_points - 1);
        for (int h : {1, 2}) {
            const auto p = mixture_posterior_velocity(inst, h, x);
            weight_dev = std::max(weight_dev, std::abs(p.weight_background + p.weight_shifted - 1.0));
        }
        const double v1 = mixture_posterior_velocity(inst, 1, x).velocity;
        const double v2_mirror = mixture_posterior_velocity(inst, 2, -x).velocity;
        symmetry_dev = std::max(symmetry_dev, std::abs(v1 + v2_mirror));
    }
    const bool tv_ok = tv.converged && tv.value <= inst.eta * (1.0 + kQuadratureTolerance);
    const Json summary = stamped(
        {{"instance", to_json(inst)},
         {"tv", {{"value", tv.value}, {"error_estimate", tv.error_estimate}, {"converged", tv.converged},
                 {"le_eta", tv_ok}}},
         {"separation",
          {{"interval", {inst.interval_lo(), inst.interval_hi()}}, {"min_abs_diff", sep.min_abs_diff},
           {"worst_x", sep.worst_x}, {"ratio_to_R", sep.ratio_to_R}, {"passes", sep.passes}, {"threshold", 0.9 * inst.R}}},
         {"lecam",
          {{"m", lecam.m}, {"m_eta", lecam.tv_budget}, {"within_budget", lecam.within_budget},
           {"separation_l2", lecam.separation}, {"separation_over_eps2_sigma2", lecam.separation_over_eps2_sigma2},
           {"risk_floor", lecam.risk_floor}}},
         {"posterior_weight_sum_max_deviation", weight_dev},
         {"mirror_symmetry_max_deviation", symmetry_dev}},
        ctx);
    write_file(ctx.out_dir / "lowerbound_summary.json", dump_json(summary));
    std::cout << "eta = " << inst.eta << ", TV = " << tv.value << ", min |v1 - v2| on I_R = " << sep.min_abs_diff
              << " (" << sep.ratio_to_R << " R)\n";
    if (!tv_ok || !sep.passes) {
        std::cerr << "lower-bound assertion failed:" << (tv_ok ? "" : " TV > eta") << (sep.passes ? "" : " separation < 0.9R")
                  << "\n";
        return kExitNumeric;
    }
    return kExitOk;
}

int cmd_gradcheck(const Globals& g, std::size_t seeds, std::size_t batch) {
    const Context ctx = load_context(g, false, Task::gaussian_1d);
    double worst = 0.0;
    Json per_seed = Json::array();
    for (std::size_t s = 0; s < seeds; ++s) {
        RngStream rng(ctx.cfg.seed + s, 0x4743ULL);
        VelocityNet net = VelocityNet::initialized(ctx.cfg.arch, rng);
        for (double& w : net.theta()) w += 0.1 * rng.normal();
        net.project();
        const auto data = draw_coupled(rng, ctx.cfg.pi0, ctx.cfg.pi1, batch);
        const GradCheck gc = gradient_check(net, data);
        worst = std::max(worst, gc.rel_error);
        per_seed.push_back({{"seed", ctx.cfg.seed + s}, {"rel_error", gc.rel_error}});
    }
    const bool ok = worst <= 1e-5;
    write_file(ctx.out_dir / "gradcheck.json",
               dump_json(stamped({{"arch", to_json(ctx.cfg.arch)}, {"max_rel_error", worst}, {"tolerance", 1e-5},
                                  {"passes", ok}, {"seeds", per_seed}},
                                 ctx)));
    std::cout << "max relative gradient error " << worst << (ok ? " (ok)" : " (FAILED)") << "\n";
    return ok ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rectified-flow numerical lab"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--config", g.config_path, "JSON experiment config");
    auto* seed_opt = app.add_option("--seed", g.seed, "Seed override (also the sweep base seed)");
    app.add_option("--jobs", g.jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output directory (overrides out_dir)");

    auto* train = app.add_subcommand("train", "Train one model; writes checkpoint.bin, trace.csv, train.json");

    SampleArgs sa;
    auto* sample = app.add_subcommand("sample", "Euler sampling from a checkpoint, optionally after reflow rounds");
    sample->add_option("--checkpoint", sa.checkpoint, "Checkpoint path (default OUT/checkpoint.bin)");
    auto* o_steps = sample->add_option("--steps", sa.steps, "Euler steps S");
    auto* o_count = sample->add_option("--count", sa.count, "Number of samples");
    auto* o_reflow = sample->add_option("--reflow", sa.reflow, "Reflow rounds before sampling");
    auto* o_traj = sample->add_option("--trajectories", sa.trajectories, "Trajectories to export");

    bool timing = false;
    auto* sweep = app.add_subcommand("sweep", "Sample-size sweep with rate fits");
    sweep->add_flag("--timing", timing, "Record wall-clock runtime per row (breaks byte reproducibility)");

    auto* bounds = app.add_subcommand("bounds", "Evaluate every bound formula for the configured inputs");
    auto* lowerbound = app.add_subcommand("lowerbound", "Two-point lower-bound construction");

    std::size_t gc_seeds = 20, gc_batch = 16;
    auto* gradcheck = app.add_subcommand("gradcheck", "Backprop against central finite differences");
    gradcheck->add_option("--seeds", gc_seeds, "Number of random networks");
    gradcheck->add_option("--batch", gc_batch, "Samples per check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    g.seed_given = seed_opt->count() > 0;
    sa.steps_given = o_steps->count() > 0;
    sa.count_given = o_count->count() > 0;
    sa.reflow_given = o_reflow->count() > 0;
    sa.traj_given = o_traj->count() > 0;

    try {
        if (train->parsed()) return cmd_train(g);
        if (sample->parsed()) return cmd_sample(g, sa);
        if (sweep->parsed()) return cmd_sweep(g, timing);
        if (bounds->parsed()) return cmd_bounds(g);
        if (lowerbound->parsed()) return cmd_lowerbound(g);
        if (gradcheck->parsed()) return cmd_gradcheck(g, gc_seeds, gc_batch);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitConfig;
}
