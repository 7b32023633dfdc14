#include "rflow/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#ifndef RFLOW_VERSION
#define RFLOW_VERSION "0.0.0"
#endif

namespace rflow {

ConfigError::ConfigError(std::string field, const std::string& what)
    : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

std::string version_string() { return RFLOW_VERSION; }

std::string config_hash(const Json& j) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

Json parse_json(const std::string& text, const std::string& source) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        // nlohmann reports a byte offset; translate to a line number
        const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
        const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
        throw ConfigError("", source + ":" + std::to_string(line) + ": JSON syntax error: " + e.what());
    }
}

Json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("", "cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_json(ss.str(), path);
}

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

Vec vec_from_json(const Json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
    Vec v;
    for (const auto& x : j) {
        if (!x.is_number()) throw ConfigError(path, "expected an array of numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

template <class F>
auto guarded(const std::string& path, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(path, e.what());
    }
}

}  // namespace

const Json& require_field(const Json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    const auto it = j.find(key);
    if (it == j.end()) throw ConfigError(join(path, key), "missing required field");
    return *it;
}

double get_number(const Json& j, const std::string& key, const std::string& path, double fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number()) throw ConfigError(join(path, key), "expected a number");
    return it->get<double>();
}

std::size_t get_count(const Json& j, const std::string& key, const std::string& path, std::size_t fallback) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number_unsigned()) throw ConfigError(join(path, key), "expected a non-negative integer");
    return it->get<std::size_t>();
}

Json to_json(const DistributionSpec& spec) {
    Json j;
    if (const auto* g = std::get_if<GaussianSpec>(&spec.kind)) {
        j["kind"] = "gaussian";
        j["mean"] = g->mean;
        j["std"] = g->std;
    } else if (const auto* m = std::get_if<GaussianMixtureSpec>(&spec.kind)) {
        j["kind"] = "gaussian_mixture";
        j["components"] = Json::array();
        for (const auto& c : m->components) j["components"].push_back({{"weight", c.weight}, {"mean", c.mean}, {"std", c.std}});
    } else {
        const auto& e = std::get<EmpiricalSpec>(spec.kind);
        j["kind"] = "empirical";
        j["points"] = e.points;
    }
    j["subgaussian_sigma"] = spec.subgaussian_sigma;
    return j;
}

DistributionSpec distribution_from_json(const Json& j, const std::string& path) {
    const Json& kind_j = require_field(j, "kind", path);
    if (!kind_j.is_string()) throw ConfigError(join(path, "kind"), "expected a string");
    const std::string kind = kind_j.get<std::string>();
    DistributionSpec spec;
    if (kind == "gaussian") {
        spec = guarded(path, [&] {
            return DistributionSpec::gaussian(vec_from_json(require_field(j, "mean", path), join(path, "mean")),
                                              get_number(j, "std", path, 1.0));
        });
    } else if (kind == "gaussian_mixture") {
        const Json& comps = require_field(j, "components", path);
        if (!comps.is_array() || comps.empty()) throw ConfigError(join(path, "components"), "expected a non-empty array");
        std::vector<MixtureComponent> cs;
        for (std::size_t i = 0; i < comps.size(); ++i) {
            const std::string p = join(path, "components[" + std::to_string(i) + "]");
            cs.push_back({get_number(comps[i], "weight", p, 1.0), vec_from_json(require_field(comps[i], "mean", p), join(p, "mean")),
                          get_number(comps[i], "std", p, 1.0)});
        }
        spec = guarded(path, [&] { return DistributionSpec::mixture(std::move(cs)); });
    } else if (kind == "empirical") {
        const Json& pts = require_field(j, "points", path);
        if (!pts.is_array() || pts.empty()) throw ConfigError(join(path, "points"), "expected a non-empty array");
        std::vector<Vec> points;
        for (std::size_t i = 0; i < pts.size(); ++i) points.push_back(vec_from_json(pts[i], join(path, "points")));
        require_field(j, "subgaussian_sigma", path);
        const double sigma = get_number(j, "subgaussian_sigma", path, 1.0);
        spec = guarded(path, [&] { return DistributionSpec::empirical(std::move(points), sigma); });
    } else {
        throw ConfigError(join(path, "kind"), "unknown distribution kind '" + kind + "'");
    }
    spec.subgaussian_sigma = get_number(j, "subgaussian_sigma", path, spec.subgaussian_sigma);
    guarded(path, [&] {
        spec.validate();
        return 0;
    });
    return spec;
}

Json to_json(const NetArchitecture& arch) {
    return {{"dim", arch.dim},      {"hidden", arch.hidden}, {"activation", to_string(arch.activation)},
            {"b", arch.b},          {"V", arch.V},           {"L_phi", arch.L_phi},
            {"C_arch", arch.C_arch}};
}

NetArchitecture architecture_from_json(const Json& j, const std::string& path, const NetArchitecture& fallback) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    NetArchitecture a = fallback;
    a.dim = get_count(j, "dim", path, a.dim);
    if (const auto it = j.find("hidden"); it != j.end()) {
        if (!it->is_array()) throw ConfigError(join(path, "hidden"), "expected an array of widths");
        a.hidden.clear();
        for (const auto& w : *it) {
            if (!w.is_number_unsigned()) throw ConfigError(join(path, "hidden"), "expected an array of widths");
            a.hidden.push_back(w.get<std::size_t>());
        }
    }
    if (const auto it = j.find("activation"); it != j.end()) {
        if (!it->is_string()) throw ConfigError(join(path, "activation"), "expected a string");
        a.activation = guarded(join(path, "activation"), [&] { return activation_from_string(it->get<std::string>()); });
    }
    a.b = get_number(j, "b", path, a.b);
    a.V = get_number(j, "V", path, a.V);
    a.L_phi = get_number(j, "L_phi", path, a.L_phi);
    a.C_arch = get_number(j, "C_arch", path, a.C_arch);
    guarded(path, [&] {
        a.validate();
        return 0;
    });
    return a;
}

std::string to_string(StepSchedule s) { return s == StepSchedule::constant ? "constant" : "diminishing"; }

Json to_json(const TrainConfig& cfg) {
    return {{"n_samples", cfg.n_samples}, {"batch_size", cfg.batch_size}, {"steps", cfg.steps},
            {"schedule", to_string(cfg.schedule)}, {"eta", cfg.eta}, {"c", cfg.c},
            {"gamma", cfg.gamma}, {"mu_hat", cfg.mu_hat}, {"kappa_hat", cfg.kappa_hat},
            {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const Json& j, const std::string& path, const TrainConfig& fallback) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    TrainConfig cfg = fallback;
    require_field(j, "steps", path);
    cfg.steps = get_count(j, "steps", path, cfg.steps);
    cfg.batch_size = get_count(j, "batch_size", path, cfg.batch_size);
    cfg.n_samples = get_count(j, "n_samples", path, cfg.n_samples);
    if (const auto it = j.find("schedule"); it != j.end()) {
        const std::string s = it->is_string() ? it->get<std::string>() : "";
        if (s == "constant") cfg.schedule = StepSchedule::constant;
        else if (s == "diminishing") cfg.schedule = StepSchedule::diminishing;
        else throw ConfigError(join(path, "schedule"), "expected \"constant\" or \"diminishing\"");
    }
    cfg.eta = get_number(j, "eta", path, cfg.eta);
    cfg.c = get_number(j, "c", path, cfg.c);
    cfg.gamma = get_number(j, "gamma", path, cfg.gamma);
    cfg.mu_hat = get_number(j, "mu_hat", path, cfg.mu_hat);
    cfg.kappa_hat = get_number(j, "kappa_hat", path, cfg.kappa_hat);
    if (const auto it = j.find("seed"); it != j.end()) {
        if (!it->is_number_unsigned()) throw ConfigError(join(path, "seed"), "expected a non-negative integer");
        cfg.seed = it->get<std::uint64_t>();
    }
    guarded(path, [&] {
        cfg.validate();
        return 0;
    });
    return cfg;
}

Json to_json(const BoundInputs& in) {
    return {{"P", in.P},
            {"n", in.n},
            {"B", in.B},
            {"L_ell", in.L_ell},
            {"mu", in.mu},
            {"L_theta", in.L_theta},
            {"b", in.arch.b},
            {"V", in.arch.V},
            {"L_phi", in.arch.L_phi},
            {"D", in.arch.depth},
            {"C_univ", in.C_univ},
            {"x_conf", in.x_conf},
            {"epsilon", in.epsilon},
            {"delta", in.delta},
            {"eps_approx", in.eps_approx},
            {"sigma", in.sigma},
            {"tail_C", in.tail.C},
            {"tail_c", in.tail.c}};
}

BoundInputs bound_inputs_from_json(const Json& j, const std::string& path, const BoundInputs& fallback) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    BoundInputs in = fallback;
    in.P = get_count(j, "P", path, in.P);
    in.n = get_number(j, "n", path, in.n);
    in.L_ell = get_number(j, "L_ell", path, in.L_ell);
    in.mu = get_number(j, "mu", path, in.mu);
    in.L_theta = get_number(j, "L_theta", path, in.L_theta);
    // B defaults to the Bernstein constant of the given L_theta and mu
    in.B = j.contains("B") ? get_number(j, "B", path, in.B)
                           : guarded(path, [&] { return bernstein_B(in.L_theta, in.mu); });
    in.arch.b = get_number(j, "b", path, in.arch.b);
    in.arch.V = get_number(j, "V", path, in.arch.V);
    in.arch.L_phi = get_number(j, "L_phi", path, in.arch.L_phi);
    in.arch.depth = get_count(j, "D", path, in.arch.depth);
    in.C_univ = get_number(j, "C_univ", path, in.C_univ);
    in.x_conf = get_number(j, "x_conf", path, in.x_conf);
    in.epsilon = get_number(j, "epsilon", path, in.epsilon);
    in.delta = get_number(j, "delta", path, in.delta);
    in.eps_approx = get_number(j, "eps_approx", path, in.eps_approx);
    in.sigma = get_number(j, "sigma", path, in.sigma);
    in.tail.C = get_number(j, "tail_C", path, in.tail.C);
    in.tail.c = get_number(j, "tail_c", path, in.tail.c);
    guarded(path, [&] {
        in.validate();
        return 0;
    });
    return in;
}

Json to_json(const BoundReport& rep) {
    Json psi = Json::array();
    for (const auto& [r, v] : rep.psi_grid) psi.push_back({{"r", r}, {"psi", v}});
    return {
        {"inputs", to_json(rep.inputs)},
        {"B", rep.B},
        {"covering", {{"eps", rep.covering_eps}, {"m", rep.inputs.n}, {"log_count", rep.log_covering}}},
        {"dudley",
         {{"r", rep.r_star}, {"value", rep.dudley.value}, {"prefactor", rep.dudley.prefactor},
          {"log_argument", rep.dudley.log_argument}, {"vacuous", rep.dudley.vacuous}}},
        {"psi", psi},
        {"r_star", rep.r_star},
        {"r_root", rep.r_root},
        {"r_root_over_r_star", rep.r_root / rep.r_star},
        {"excess",
         {{"value", rep.excess.value}, {"localized_term", rep.excess.localized_term},
          {"confidence_term", rep.excess.confidence_term}, {"combined_leading", rep.excess.combined_leading},
          {"cross_check_rel_error", rep.excess.cross_check_rel_error}, {"cross_check_ok", rep.excess.cross_check_ok}}},
        {"stat_bound", rep.sample.stat},
        {"sample_size",
         {{"n_required", rep.sample.n_required}, {"satisfiable", rep.sample.satisfiable},
          {"budget", rep.sample.budget}, {"x_stat", rep.sample.x_stat}, {"x_sample", rep.sample.x_sample},
          {"message", rep.sample.message}}},
        {"truncation",
         {{"M", rep.truncation.M}, {"delta_n", rep.truncation.delta_n}, {"bias_budget", rep.truncation.bias_budget},
          {"bad_event_budget", rep.truncation.bad_event_budget}}},
        {"constants", {{"local_rad", kLocalRadConstant}, {"fixed_point", kFixedPointConstant},
                       {"combined", kCombinedConstant}, {"identity_holds", rep.constant_identity}}},
        {"C_univ", rep.inputs.C_univ},
        {"eps_approx", rep.inputs.eps_approx},
        {"side_condition", {{"holds", rep.side_condition_ok}, {"rule", "2n > exp(x_conf)"}}},
    };
}

Json to_json(const LowerBoundInstance& inst) {
    return {{"sigma", inst.sigma}, {"R", inst.R}, {"epsilon", inst.epsilon}, {"eta", inst.eta},
            {"c_interval", inst.c_interval}};
}

namespace {

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    const Json header = {{"format", kCheckpointFormat}, {"version", version_string()},
                         {"arch", to_json(ckpt.net.arch())}, {"P", ckpt.net.parameter_count()},
                         {"seed", ckpt.seed}, {"step", ckpt.step}, {"config_hash", ckpt.config_hash}};
    out << header.dump() << '\n';
    for (double w : ckpt.net.theta()) {
        const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(w));
        out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    if (!out) throw FormatError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("checkpoint: missing header line");
    Json header;
    try {
        header = Json::parse(line);
    } catch (const Json::parse_error& e) {
        throw FormatError(std::string("checkpoint: header is not valid JSON: ") + e.what());
    }
    if (!header.is_object() || header.value("format", "") != kCheckpointFormat)
        throw FormatError("checkpoint: unrecognized format tag");
    Checkpoint ckpt;
    NetArchitecture arch;
    std::size_t P = 0;
    try {
        arch = architecture_from_json(header.at("arch"), "arch", NetArchitecture{});
        P = header.at("P").get<std::size_t>();
        ckpt.seed = header.at("seed").get<std::uint64_t>();
        ckpt.step = header.at("step").get<std::size_t>();
        ckpt.config_hash = header.value("config_hash", "");
    } catch (const std::exception& e) {
        throw FormatError(std::string("checkpoint: bad header: ") + e.what());
    }
    if (P != arch.parameter_count())
        throw FormatError("checkpoint: header P = " + std::to_string(P) + " but the architecture has " +
                          std::to_string(arch.parameter_count()) + " parameters");
    std::vector<double> theta(P);
    for (double& w : theta) {
        std::uint64_t bits = 0;
        if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) throw FormatError("checkpoint: parameter block truncated");
        w = std::bit_cast<double>(to_little(bits));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes after parameter block");
    if (!all_finite(theta)) throw FormatError("checkpoint: non-finite parameter");
    ckpt.net = VelocityNet(arch, std::move(theta));
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path + " for writing");
    write_checkpoint(f, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path);
    return read_checkpoint(f);
}

}  // namespace rflow
