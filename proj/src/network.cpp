#include "rflow/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rflow {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softplus_clamped: return "softplus_clamped";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "softplus_clamped") return Activation::softplus_clamped;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

std::vector<std::size_t> NetArchitecture::widths() const {
    std::vector<std::size_t> w;
    w.push_back(dim + 1);
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(dim);
    return w;
}

std::size_t NetArchitecture::parameter_count() const {
    const auto w = widths();
    std::size_t p = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) p += w[l] * w[l + 1] + w[l + 1];
    return p;
}

void NetArchitecture::validate() const {
    if (dim == 0) throw std::invalid_argument("architecture: dim must be positive");
    if (depth() < 2) throw std::invalid_argument("architecture: depth must be at least 2");
    for (auto h : hidden)
        if (h == 0) throw std::invalid_argument("architecture: hidden widths must be positive");
    if (!(b > 0.0)) throw std::invalid_argument("architecture: b must be positive");
    if (!(V > 0.0)) throw std::invalid_argument("architecture: V must be positive");
    if (!(L_phi > 0.0)) throw std::invalid_argument("architecture: L_phi must be positive");
    if (!(C_arch > 0.0)) throw std::invalid_argument("architecture: C_arch must be positive");
}

namespace {

std::vector<LayerSlice> layout(const NetArchitecture& arch) {
    const auto w = arch.widths();
    std::vector<LayerSlice> layers;
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
        LayerSlice s;
        s.in = w[l];
        s.out = w[l + 1];
        s.weight_offset = offset;
        s.bias_offset = offset + s.in * s.out;
        offset = s.bias_offset + s.out;
        layers.push_back(s);
    }
    return layers;
}

inline double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

VelocityNet::VelocityNet(NetArchitecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    layers_ = layout(arch_);
    theta_.assign(arch_.parameter_count(), 0.0);
}

VelocityNet::VelocityNet(NetArchitecture arch, std::vector<double> theta) : VelocityNet(std::move(arch)) {
    if (theta.size() != theta_.size()) throw std::invalid_argument("VelocityNet: parameter count mismatch");
    require_finite(theta, "network parameters");
    theta_ = std::move(theta);
}

VelocityNet VelocityNet::initialized(NetArchitecture arch, RngStream& rng) {
    VelocityNet net(std::move(arch));
    for (const auto& layer : net.layers_) {
        const double scale = net.arch_.V / static_cast<double>(layer.in);
        for (std::size_t k = 0; k < layer.in * layer.out; ++k)
            net.theta_[layer.weight_offset + k] = scale * (2.0 * rng.uniform() - 1.0);
    }
    net.project();
    return net;
}

void VelocityNet::activate(const Vec& z, Vec& a) const {
    const double b = arch_.b;
    const double L = arch_.L_phi;
    a.resize(z.size());
    switch (arch_.activation) {
        case Activation::tanh:
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = b * std::tanh(L * z[i] / b);
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = b * logistic(4.0 * L * z[i] / b);
            break;
        case Activation::softplus_clamped:
            for (std::size_t i = 0; i < z.size(); ++i) a[i] = std::min(softplus(L * z[i]), b);
            break;
    }
}

double VelocityNet::activation_derivative(double z) const {
    const double b = arch_.b;
    const double L = arch_.L_phi;
    switch (arch_.activation) {
        case Activation::tanh: {
            const double th = std::tanh(L * z / b);
            return L * (1.0 - th * th);
        }
        case Activation::sigmoid: {
            const double s = logistic(4.0 * L * z / b);
            return 4.0 * L * s * (1.0 - s);
        }
        case Activation::softplus_clamped:
            return softplus(L * z) < b ? L * logistic(L * z) : 0.0;
    }
    return 0.0;
}

const Vec& VelocityNet::forward(std::span<const double> x, double t, Tape& tape) const {
    if (x.size() != arch_.dim) throw std::invalid_argument("VelocityNet::forward: input dimension mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("VelocityNet::forward: t outside [0, 1]");
    if (!all_finite(x)) throw NumericError("VelocityNet::forward: non-finite input");

    const std::size_t n_layers = layers_.size();
    tape.pre.resize(n_layers);
    tape.post.resize(n_layers + 1);
    tape.post[0].assign(x.begin(), x.end());
    tape.post[0].push_back(t);

    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& layer = layers_[l];
        const Vec& in = tape.post[l];
        Vec& z = tape.pre[l];
        z.resize(layer.out);
        const double* w = theta_.data() + layer.weight_offset;
        const double* bias = theta_.data() + layer.bias_offset;
        for (std::size_t i = 0; i < layer.out; ++i) {
            double s = bias[i];
            const double* row = w + i * layer.in;
            for (std::size_t j = 0; j < layer.in; ++j) s += row[j] * in[j];
            z[i] = s;
        }
        if (l + 1 < n_layers) {
            activate(z, tape.post[l + 1]);
        } else {
            tape.post[l + 1] = z;
        }
    }
    return tape.post.back();
}

Vec VelocityNet::forward(std::span<const double> x, double t) const {
    Tape tape;
    return forward(x, t, tape);
}

void VelocityNet::backward(Tape& tape, std::span<const double> dv, std::span<double> grad) const {
    const std::size_t n_layers = layers_.size();
    if (dv.size() != arch_.dim) throw std::invalid_argument("VelocityNet::backward: cotangent dimension mismatch");
    if (grad.size() != theta_.size()) throw std::invalid_argument("VelocityNet::backward: gradient size mismatch");
    tape.delta.resize(n_layers);
    tape.delta[n_layers - 1].assign(dv.begin(), dv.end());

    for (std::size_t l = n_layers; l-- > 0;) {
        const auto& layer = layers_[l];
        const Vec& in = tape.post[l];
        const Vec& delta = tape.delta[l];
        double* gw = grad.data() + layer.weight_offset;
        double* gb = grad.data() + layer.bias_offset;
        for (std::size_t i = 0; i < layer.out; ++i) {
            const double di = delta[i];
            gb[i] += di;
            double* grow = gw + i * layer.in;
            for (std::size_t j = 0; j < layer.in; ++j) grow[j] += di * in[j];
        }
        if (l == 0) break;
        // Propagate through W^T and the activation of the previous layer.
        Vec& prev = tape.delta[l - 1];
        prev.assign(layer.in, 0.0);
        const double* w = theta_.data() + layer.weight_offset;
        for (std::size_t i = 0; i < layer.out; ++i) {
            const double di = delta[i];
            const double* row = w + i * layer.in;
            for (std::size_t j = 0; j < layer.in; ++j) prev[j] += row[j] * di;
        }
        const Vec& z_prev = tape.pre[l - 1];
        for (std::size_t j = 0; j < layer.in; ++j) prev[j] *= activation_derivative(z_prev[j]);
    }
}

double VelocityNet::max_row_l1() const {
    double worst = 0.0;
    for (const auto& layer : layers_) {
        for (std::size_t i = 0; i < layer.out; ++i) {
            const double* row = theta_.data() + layer.weight_offset + i * layer.in;
            double s = std::abs(theta_[layer.bias_offset + i]);
            for (std::size_t j = 0; j < layer.in; ++j) s += std::abs(row[j]);
            worst = std::max(worst, s);
        }
    }
    return worst;
}

void VelocityNet::project() {
    Vec row;
    for (const auto& layer : layers_) {
        for (std::size_t i = 0; i < layer.out; ++i) {
            double* w = theta_.data() + layer.weight_offset + i * layer.in;
            double& bias = theta_[layer.bias_offset + i];
            row.assign(w, w + layer.in);
            row.push_back(bias);
            l1_project_inplace(row, arch_.V);
            std::copy(row.begin(), row.end() - 1, w);
            bias = row.back();
        }
    }
}

VelocityNet project_constraints(VelocityNet net) {
    net.project();
    return net;
}

double loss_and_gradient(const VelocityNet& net, std::span<const CoupledSample> batch, std::span<double> grad) {
    if (batch.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
    std::fill(grad.begin(), grad.end(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    Tape tape;
    Vec residual(net.arch().dim);
    double loss = 0.0;
    for (const auto& s : batch) {
        const Vec& v = net.forward(s.x_t, s.t, tape);
        double sq = 0.0;
        for (std::size_t k = 0; k < residual.size(); ++k) {
            const double r = v[k] - s.displacement[k];
            sq += r * r;
            residual[k] = 2.0 * r * inv_n;
        }
        loss += sq;
        net.backward(tape, residual, grad);
    }
    return loss * inv_n;
}

std::vector<double> backward(const VelocityNet& net, std::span<const CoupledSample> batch) {
    std::vector<double> grad(net.parameter_count());
    loss_and_gradient(net, batch, grad);
    return grad;
}

GradCheck gradient_check(const VelocityNet& net, std::span<const CoupledSample> batch, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("gradient_check: h must be positive");
    const std::vector<double> analytic = backward(net, batch);
    std::vector<double> numeric(analytic.size());
    VelocityNet probe = net;
    std::vector<double> scratch(analytic.size());
    for (std::size_t j = 0; j < analytic.size(); ++j) {
        const double keep = probe.theta()[j];
        probe.theta()[j] = keep + h;
        const double up = loss_and_gradient(probe, batch, scratch);
        probe.theta()[j] = keep - h;
        const double down = loss_and_gradient(probe, batch, scratch);
        probe.theta()[j] = keep;
        numeric[j] = (up - down) / (2.0 * h);
    }
    GradCheck g;
    for (std::size_t j = 0; j < analytic.size(); ++j) {
        const double diff = std::abs(analytic[j] - numeric[j]);
        if (diff > g.max_abs_diff) {
            g.max_abs_diff = diff;
            g.worst_index = j;
        }
    }
    g.rel_error = norm2(sub(analytic, numeric)) / std::max({norm2(analytic), norm2(numeric), 1e-12});
    return g;
}

LipschitzReport lipschitz_report(const NetArchitecture& arch, double M_disp) {
    arch.validate();
    if (!(M_disp >= 0.0)) throw std::invalid_argument("lipschitz_report: M_disp must be non-negative");
    const double D = static_cast<double>(arch.depth());
    const double layer = arch.L_phi * arch.V;
    LipschitzReport r;
    r.C_arch = arch.C_arch;
    r.L_x = std::pow(layer, D - 1.0);
    r.L_x_composition = std::pow(arch.L_phi, D - 1.0) * std::pow(arch.V, D);
    r.L_theta = arch.C_arch * D * std::pow(layer, D);
    r.M0 = arch.V * std::max(arch.b, 1.0);
    r.L_ell = 2.0 * (r.M0 + M_disp);
    return r;
}

}  // namespace rflow
