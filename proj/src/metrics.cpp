#include "rflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rflow {

VelocityField field_of(const VelocityNet& net) {
    return [&net](std::span<const double> x, double t) { return net.forward(x, t); };
}

double w2_empirical_1d(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("w2_empirical_1d: empty input");
    if (a.size() != b.size()) throw std::invalid_argument("w2_empirical_1d: inputs must have equal length");
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double s = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) {
        const double d = sa[i] - sb[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(sa.size()));
}

Assignment solve_assignment(const Matrix& cost) {
    const std::size_t n = cost.rows();
    if (n == 0 || cost.cols() != n) throw std::invalid_argument("solve_assignment: cost matrix must be square and non-empty");
    constexpr double inf = std::numeric_limits<double>::infinity();

    // 1-based potentials; p[j] is the row matched to column j, column 0 is the virtual root.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<double> minv(n + 1);
    std::vector<char> used(n + 1);

    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    Assignment result;
    result.row_to_col.assign(n, 0);
    for (std::size_t j = 1; j <= n; ++j) result.row_to_col[p[j] - 1] = j - 1;
    for (std::size_t i = 0; i < n; ++i) result.cost += cost(i, result.row_to_col[i]);
    return result;
}

double w2_empirical_assignment(std::span<const Vec> a, std::span<const Vec> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("w2_empirical_assignment: empty input");
    if (a.size() != b.size()) throw std::invalid_argument("w2_empirical_assignment: inputs must have equal length");
    const std::size_t n = a.size();
    if (n > kMaxAssignmentSize)
        throw std::invalid_argument("w2_empirical_assignment: " + std::to_string(n) + " points exceeds the limit of " +
                                    std::to_string(kMaxAssignmentSize) + "; subsample both sets first");
    Matrix cost(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cost(i, j) = norm2_squared(sub(a[i], b[j]));
    const Assignment best = solve_assignment(cost);
    return std::sqrt(std::max(best.cost, 0.0) / static_cast<double>(n));
}

ExcessRiskEstimate excess_risk(const VelocityField& net, const VelocityField& proxy,
                               std::span<const CoupledSample> holdout) {
    if (holdout.empty()) throw std::invalid_argument("excess_risk: empty holdout");
    double sum = 0.0;
    double sum_sq = 0.0;
    for (const auto& s : holdout) {
        const double gap = norm2_squared(sub(net(s.x_t, s.t), proxy(s.x_t, s.t)));
        sum += gap;
        sum_sq += gap * gap;
    }
    const double m = static_cast<double>(holdout.size());
    ExcessRiskEstimate e;
    e.value = sum / m;
    const double var = std::max(sum_sq / m - e.value * e.value, 0.0);
    e.std_error = holdout.size() > 1 ? std::sqrt(var / (m - 1.0)) : 0.0;
    return e;
}

RateFit fit_rate(std::span<const std::pair<double, double>> grid) {
    if (grid.size() < 4) throw std::invalid_argument("fit_rate: at least 4 grid points required");
    RateFit fit;
    fit.grid.assign(grid.begin(), grid.end());
    const double m = static_cast<double>(grid.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& [n, value] : grid) {
        if (!(n > 0.0) || !(value > 0.0)) throw std::invalid_argument("fit_rate: n and values must be positive");
        sx += std::log(n);
        sy += std::log(value);
    }
    const double mx = sx / m;
    const double my = sy / m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [n, value] : grid) {
        const double dx = std::log(n) - mx;
        const double dy = std::log(value) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_rate: grid needs at least two distinct n");
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    const double sse = std::max(syy - fit.slope * sxy, 0.0);
    fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    fit.slope_std_error = std::sqrt(sse / (m - 2.0) / sxx);
    return fit;
}

}  // namespace rflow
