#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rflow/distributions.hpp"
#include "rflow/linalg.hpp"
#include "rflow/rng.hpp"

namespace rflow {

/// Bounded hidden activations. Each is scaled so its range lies in [-b, b]
/// and its Lipschitz constant is L_phi:
///   tanh              b * tanh(L_phi z / b)
///   sigmoid           b * sigmoid(4 L_phi z / b)
///   softplus_clamped  min(softplus(L_phi z), b)   (derivative 0 once clamped)
enum class Activation { tanh, sigmoid, softplus_clamped };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Feed-forward velocity network shape. Input is (x, t) of width dim + 1,
/// output width dim, depth = number of affine layers = hidden.size() + 1.
struct NetArchitecture {
    std::size_t dim = 1;
    std::vector<std::size_t> hidden{16};
    Activation activation = Activation::tanh;
    double b = 1.0;
    double V = 1.0;
    double L_phi = 1.0;
    double C_arch = 1.0;

    std::size_t depth() const { return hidden.size() + 1; }
    std::vector<std::size_t> widths() const;
    std::size_t parameter_count() const;
    void validate() const;

    bool operator==(const NetArchitecture&) const = default;
};

/// Placement of one affine layer inside the flat parameter vector.
/// Weights are row-major (out x in), followed by the out biases.
struct LayerSlice {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
};

/// Per-evaluation buffers for forward and reverse passes.
struct Tape {
    std::vector<Vec> pre;   // pre-activations per layer
    std::vector<Vec> post;  // post[0] is the input (x, t); post[l+1] the output of layer l
    std::vector<Vec> delta;
};

/// v_theta(x, t). Every constraint row is (weights of one unit, its bias) and
/// is kept inside the l1 ball of radius V by project().
class VelocityNet {
public:
    explicit VelocityNet(NetArchitecture arch);
    VelocityNet(NetArchitecture arch, std::vector<double> theta);

    /// Weights uniform in [-V/fan_in, V/fan_in], biases zero.
    static VelocityNet initialized(NetArchitecture arch, RngStream& rng);

    const NetArchitecture& arch() const { return arch_; }
    std::span<const double> theta() const { return theta_; }
    std::span<double> theta() { return theta_; }
    std::size_t parameter_count() const { return theta_.size(); }
    const std::vector<LayerSlice>& layers() const { return layers_; }

    Vec forward(std::span<const double> x, double t) const;

    /// Forward pass recording intermediates; returns the output (tape.post.back()).
    const Vec& forward(std::span<const double> x, double t, Tape& tape) const;

    /// Accumulates into `grad` the vector-Jacobian product of the last taped
    /// forward pass with output cotangent `dv`.
    void backward(Tape& tape, std::span<const double> dv, std::span<double> grad) const;

    /// Largest l1 norm over all constraint rows (weights plus bias).
    double max_row_l1() const;

    void project();

private:
    NetArchitecture arch_;
    std::vector<LayerSlice> layers_;
    std::vector<double> theta_;

    void activate(const Vec& z, Vec& a) const;
    double activation_derivative(double z) const;
};

/// Copy of `net` with every constraint row projected onto the l1 ball of radius V.
VelocityNet project_constraints(VelocityNet net);

/// Batch-mean squared loss and its gradient, written to `grad` (overwritten).
double loss_and_gradient(const VelocityNet& net, std::span<const CoupledSample> batch, std::span<double> grad);

/// Gradient of (1/n) sum |v_theta(x_t, t) - (x1 - x0)|^2.
std::vector<double> backward(const VelocityNet& net, std::span<const CoupledSample> batch);

struct GradCheck {
    double rel_error = 0.0;  // |g_backprop - g_fd| / max(|g_backprop|, |g_fd|, 1e-12)
    double max_abs_diff = 0.0;
    std::size_t worst_index = 0;
};

/// Compares backward() with central finite differences of the batch loss.
GradCheck gradient_check(const VelocityNet& net, std::span<const CoupledSample> batch, double h = 1e-6);

/// Architecture-level constants of the hypothesis class.
struct LipschitzReport {
    double L_x = 0.0;              // (L_phi V)^(D-1)
    double L_x_composition = 0.0;  // L_phi^(D-1) V^D, the layer-by-layer sup-norm product
    double L_theta = 0.0;          // C_arch D (L_phi V)^D
    double M0 = 0.0;               // V max(b, 1)
    double L_ell = 0.0;            // 2 (M0 + M_disp)
    double C_arch = 1.0;
};

LipschitzReport lipschitz_report(const NetArchitecture& arch, double M_disp);

}  // namespace rflow
