#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "rflow/distributions.hpp"
#include "rflow/linalg.hpp"
#include "rflow/network.hpp"

namespace rflow {

/// A time-dependent vector field v(x, t), e.g. a network or a closed-form oracle.
using VelocityField = std::function<Vec(std::span<const double>, double)>;

/// Non-owning field view of a network; the network must outlive the field.
VelocityField field_of(const VelocityNet& net);

/// Exact empirical W2 in one dimension: sqrt of the mean squared gap of sorted samples.
double w2_empirical_1d(std::span<const double> a, std::span<const double> b);

/// Largest instance accepted by the exact assignment solver.
inline constexpr std::size_t kMaxAssignmentSize = 512;

struct Assignment {
    double cost = 0.0;                   // total cost of the matching
    std::vector<std::size_t> row_to_col; // row i is matched with column row_to_col[i]
};

/// Minimum-cost perfect matching on a square cost matrix
/// (shortest augmenting paths with potentials, O(n^3)).
Assignment solve_assignment(const Matrix& cost);

/// sqrt((1/n) min over matchings of sum |a_i - b_pi(i)|^2), solved exactly.
double w2_empirical_assignment(std::span<const Vec> a, std::span<const Vec> b);

struct ExcessRiskEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Mean squared velocity gap (1/m) sum |v_net(x_t, t) - v_proxy(x_t, t)|^2 on a holdout set.
ExcessRiskEstimate excess_risk(const VelocityField& net, const VelocityField& proxy,
                               std::span<const CoupledSample> holdout);

/// Log-log least-squares fit value ~ exp(intercept) * n^slope.
struct RateFit {
    std::vector<std::pair<double, double>> grid;
    double slope = 0.0;
    double intercept = 0.0;
    double slope_std_error = 0.0;
    double r_squared = 0.0;
};

RateFit fit_rate(std::span<const std::pair<double, double>> grid);

}  // namespace rflow
