#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "rflow/experiment.hpp"

namespace py = pybind11;
using namespace rflow;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec> rows_of(const Array& a, const char* name) {
    if (a.ndim() == 1) {
        std::vector<Vec> out;
        for (py::ssize_t i = 0; i < a.shape(0); ++i) out.push_back({a.at(i)});
        return out;
    }
    if (a.ndim() != 2) throw std::invalid_argument(std::string(name) + ": expected a 1-D or 2-D array");
    std::vector<Vec> out(static_cast<std::size_t>(a.shape(0)));
    const double* p = a.data();
    const auto d = static_cast<std::size_t>(a.shape(1));
    for (std::size_t i = 0; i < out.size(); ++i) out[i].assign(p + i * d, p + (i + 1) * d);
    return out;
}

Array to_array(const std::vector<Vec>& rows, std::size_t d) {
    Array out({rows.size(), d});
    auto m = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < d; ++k) m(i, k) = rows[i][k];
    return out;
}

Array to_array(std::span<const double> v) {
    Array out(v.size());
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

std::vector<CoupledSample> batch_of(const Array& x0, const Array& x1, const Array& t) {
    const auto a = rows_of(x0, "x0");
    const auto b = rows_of(x1, "x1");
    if (a.size() != b.size() || t.ndim() != 1 || static_cast<std::size_t>(t.shape(0)) != a.size())
        throw std::invalid_argument("x0, x1 and t must have the same number of rows");
    std::vector<CoupledSample> out;
    out.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out.push_back(CoupledSample::make(a[i], b[i], t.at(i)));
    return out;
}

Json parse(const std::string& text) { return parse_json(text, "<python>"); }

}  // namespace

PYBIND11_MODULE(_rflow, m) {
    m.doc() = "Rectified-flow numerical lab";
    m.attr("__version__") = version_string();

    static py::exception<Error> base(m, "RflowError", PyExc_RuntimeError);
    static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
    static py::exception<FormatError> format_error(m, "FormatError", base.ptr());
    static py::exception<NumericError> numeric_error(m, "NumericError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigError& e) {
            py::set_error(config_error, e.what());
        } catch (const FormatError& e) {
            py::set_error(format_error, e.what());
        } catch (const NumericError& e) {
            py::set_error(numeric_error, e.what());
        } catch (const Error& e) {
            py::set_error(base, e.what());
        }
    });

    py::class_<NetArchitecture>(m, "Architecture")
        .def(py::init([](std::size_t dim, std::vector<std::size_t> hidden, const std::string& activation, double b,
                         double V, double L_phi) {
                 NetArchitecture a;
                 a.dim = dim;
                 a.hidden = std::move(hidden);
                 a.activation = activation_from_string(activation);
                 a.b = b;
                 a.V = V;
                 a.L_phi = L_phi;
                 a.validate();
                 return a;
             }),
             py::arg("dim") = 1, py::arg("hidden") = std::vector<std::size_t>{16}, py::arg("activation") = "tanh",
             py::arg("b") = 1.0, py::arg("V") = 1.0, py::arg("L_phi") = 1.0)
        .def_readonly("dim", &NetArchitecture::dim)
        .def_readonly("hidden", &NetArchitecture::hidden)
        .def_property_readonly("activation", [](const NetArchitecture& a) { return to_string(a.activation); })
        .def_readonly("b", &NetArchitecture::b)
        .def_readonly("V", &NetArchitecture::V)
        .def_readonly("L_phi", &NetArchitecture::L_phi)
        .def_property_readonly("depth", &NetArchitecture::depth)
        .def_property_readonly("parameter_count", &NetArchitecture::parameter_count)
        .def("__eq__", [](const NetArchitecture& a, const NetArchitecture& b) { return a == b; });

    py::class_<VelocityNet>(m, "VelocityNet")
        .def(py::init<NetArchitecture>(), py::arg("arch"))
        .def(py::init([](NetArchitecture arch, const Array& theta) {
                 return VelocityNet(std::move(arch), std::vector<double>(theta.data(), theta.data() + theta.size()));
             }),
             py::arg("arch"), py::arg("theta"))
        .def_static(
            "initialized",
            [](NetArchitecture arch, std::uint64_t seed) {
                RngStream rng(seed, 0);
                return VelocityNet::initialized(std::move(arch), rng);
            },
            py::arg("arch"), py::arg("seed"))
        .def_property_readonly("arch", &VelocityNet::arch)
        .def_property_readonly("parameter_count", &VelocityNet::parameter_count)
        .def_property(
            "theta", [](const VelocityNet& n) { return to_array(n.theta()); },
            [](VelocityNet& n, const Array& theta) {
                if (static_cast<std::size_t>(theta.size()) != n.parameter_count())
                    throw std::invalid_argument("theta has the wrong length");
                std::copy(theta.data(), theta.data() + theta.size(), n.theta().begin());
            })
        .def(
            "forward",
            [](const VelocityNet& n, const Array& x, double t) {
                const auto rows = rows_of(x, "x");
                std::vector<Vec> out;
                for (const auto& r : rows) out.push_back(n.forward(r, t));
                return to_array(out, n.arch().dim);
            },
            py::arg("x"), py::arg("t"))
        .def("max_row_l1", &VelocityNet::max_row_l1)
        .def("project", &VelocityNet::project);

    py::class_<DistributionSpec>(m, "Distribution")
        .def_static("gaussian", &DistributionSpec::gaussian, py::arg("mean"), py::arg("std"))
        .def_static(
            "mixture",
            [](const std::vector<std::tuple<double, Vec, double>>& comps) {
                std::vector<MixtureComponent> cs;
                for (const auto& [w, mean, std] : comps) cs.push_back({w, mean, std});
                return DistributionSpec::mixture(std::move(cs));
            },
            py::arg("components"))
        .def_static(
            "empirical", [](const Array& pts, double sigma) { return DistributionSpec::empirical(rows_of(pts, "points"), sigma); },
            py::arg("points"), py::arg("subgaussian_sigma"))
        .def_static("point_mass", &DistributionSpec::point_mass, py::arg("at"))
        .def_property_readonly("dim", &DistributionSpec::dim)
        .def_readonly("subgaussian_sigma", &DistributionSpec::subgaussian_sigma)
        .def(
            "sample",
            [](const DistributionSpec& s, std::size_t n, std::uint64_t seed) {
                RngStream rng(seed, 0);
                std::vector<Vec> out;
                for (std::size_t i = 0; i < n; ++i) out.push_back(sample(s, rng));
                return to_array(out, s.dim());
            },
            py::arg("n"), py::arg("seed"));

    m.def(
        "draw_coupled",
        [](const DistributionSpec& pi0, const DistributionSpec& pi1, std::size_t n, std::uint64_t seed) {
            RngStream rng(seed, 0);
            const auto data = draw_coupled(rng, pi0, pi1, n);
            std::vector<Vec> x0, x1;
            Array t(n);
            for (std::size_t i = 0; i < n; ++i) {
                x0.push_back(data[i].x0);
                x1.push_back(data[i].x1);
                t.mutable_at(i) = data[i].t;
            }
            return py::make_tuple(to_array(x0, pi0.dim()), to_array(x1, pi1.dim()), t);
        },
        py::arg("pi0"), py::arg("pi1"), py::arg("n"), py::arg("seed"),
        "Independent-coupling triples (x0, x1, t) with t uniform on [0, 1].");

    m.def(
        "loss_and_gradient",
        [](const VelocityNet& net, const Array& x0, const Array& x1, const Array& t) {
            const auto batch = batch_of(x0, x1, t);
            std::vector<double> grad(net.parameter_count());
            const double loss = loss_and_gradient(net, batch, grad);
            return py::make_tuple(loss, to_array(grad));
        },
        py::arg("net"), py::arg("x0"), py::arg("x1"), py::arg("t"));

    m.def(
        "gradient_check",
        [](const VelocityNet& net, const Array& x0, const Array& x1, const Array& t) {
            return gradient_check(net, batch_of(x0, x1, t)).rel_error;
        },
        py::arg("net"), py::arg("x0"), py::arg("x1"), py::arg("t"),
        "Largest relative error of backprop against central differences.");

    m.def(
        "train",
        [](const VelocityNet& net, const Array& x0, const Array& x1, const Array& t, const std::string& config) {
            const auto batch = batch_of(x0, x1, t);
            const TrainConfig cfg = train_config_from_json(parse(config), "train", TrainConfig{});
            TrainResult r = [&] {
                py::gil_scoped_release release;
                return train(net, batch, cfg);
            }();
            std::vector<double> losses;
            for (const auto& s : r.trace.steps) losses.push_back(s.loss);
            return py::make_tuple(std::move(r.net), r.trace.initial_loss, r.trace.final_loss, to_array(losses));
        },
        py::arg("net"), py::arg("x0"), py::arg("x1"), py::arg("t"), py::arg("config_json"));

    m.def(
        "euler_sample",
        [](const VelocityNet& net, const Array& z0, std::size_t steps) {
            const VelocityField field = field_of(net);
            std::vector<Vec> out;
            for (const auto& z : rows_of(z0, "z0")) out.push_back(euler_terminal(field, z, steps));
            return to_array(out, net.arch().dim);
        },
        py::arg("net"), py::arg("z0"), py::arg("steps"));

    m.def(
        "one_step_sample",
        [](const VelocityNet& net, const Array& z0) {
            const VelocityField field = field_of(net);
            std::vector<Vec> out;
            for (const auto& z : rows_of(z0, "z0")) out.push_back(one_step_sample(field, z));
            return to_array(out, net.arch().dim);
        },
        py::arg("net"), py::arg("z0"));

    m.def(
        "vstar_gaussian",
        [](const Vec& mu0, const Vec& mu1, double std0, double std1, const Array& x, double t) {
            const GaussianPairSpec spec{mu0, mu1, std0, std1};
            spec.validate();
            std::vector<Vec> out;
            for (const auto& r : rows_of(x, "x")) out.push_back(vstar_gaussian(spec, r, t));
            return to_array(out, mu0.size());
        },
        py::arg("mu0"), py::arg("mu1"), py::arg("std0"), py::arg("std1"), py::arg("x"), py::arg("t"));

    m.def(
        "w2",
        [](const Array& a, const Array& b) {
            const auto pa = rows_of(a, "a"), pb = rows_of(b, "b");
            if (!pa.empty() && pa.front().size() == 1) {
                std::vector<double> xa, xb;
                for (const auto& p : pa) xa.push_back(p[0]);
                for (const auto& p : pb) xb.push_back(p[0]);
                return w2_empirical_1d(xa, xb);
            }
            return w2_empirical_assignment(pa, pb);
        },
        py::arg("a"), py::arg("b"), "Empirical W2 between equal-size point sets (sorting in 1-D, assignment otherwise).");

    m.def(
        "evaluate_bounds",
        [](const std::string& inputs) {
            const BoundInputs in = bound_inputs_from_json(parse(inputs), "bounds", BoundInputs{});
            return to_json(evaluate_bounds(in)).dump();
        },
        py::arg("inputs_json"));

    m.def(
        "lower_bound",
        [](double sigma, double R, double epsilon, double c_interval) {
            const auto inst = LowerBoundInstance::make(sigma, R, epsilon, c_interval);
            const auto tv = tv_distance_mixtures(inst);
            const auto sep = separation_on_interval(inst);
            py::dict d;
            d["eta"] = inst.eta;
            d["tv"] = tv.value;
            d["tv_converged"] = tv.converged;
            d["min_separation"] = sep.min_abs_diff;
            d["separation_ratio"] = sep.ratio_to_R;
            d["separation_passes"] = sep.passes;
            return d;
        },
        py::arg("sigma"), py::arg("R"), py::arg("epsilon"), py::arg("c_interval") = 1.0);

    m.def(
        "posterior_velocity",
        [](double sigma, double R, double epsilon, int hypothesis, double x) {
            const auto p = mixture_posterior_velocity(LowerBoundInstance::make(sigma, R, epsilon), hypothesis, x);
            return py::make_tuple(p.velocity, p.weight_background, p.weight_shifted);
        },
        py::arg("sigma"), py::arg("R"), py::arg("epsilon"), py::arg("hypothesis"), py::arg("x"));

    m.def(
        "normalize_config",
        [](const std::string& config) { return to_json(experiment_from_json(parse(config))).dump(); },
        py::arg("config_json"), "Task preset overlaid with the given config, validated.");

    m.def(
        "train_model",
        [](const std::string& config, std::uint64_t seed) {
            const ExperimentConfig cfg = experiment_from_json(parse(config));
            py::gil_scoped_release release;
            return train_model(cfg, seed).net;
        },
        py::arg("config_json"), py::arg("seed"));

    m.def(
        "run_sweep",
        [](const std::string& config, std::size_t jobs) {
            const ExperimentConfig cfg = experiment_from_json(parse(config));
            SweepResult r;
            {
                py::gil_scoped_release release;
                r = run_sweep(cfg, jobs, false);
            }
            std::ostringstream csv;
            write_sweep_csv(csv, r);
            return py::make_tuple(csv.str(), rate_fit_json(r).dump());
        },
        py::arg("config_json"), py::arg("jobs") = 1, "Returns the sweep CSV text and the rate-fit JSON.");

    m.def(
        "save_checkpoint",
        [](const std::string& path, const VelocityNet& net, std::uint64_t seed, std::size_t step) {
            save_checkpoint(path, Checkpoint{net, seed, step, "0000000000000000"});
        },
        py::arg("path"), py::arg("net"), py::arg("seed") = 0, py::arg("step") = 0);
    m.def(
        "load_checkpoint", [](const std::string& path) { return load_checkpoint(path).net; }, py::arg("path"));
}
