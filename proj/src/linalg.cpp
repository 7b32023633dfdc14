#include "rflow/linalg.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace rflow {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(std::span<const double> v, const char* what) {
    if (!all_finite(v)) throw NumericError(std::string("non-finite value in ") + what);
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm1(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
}

double norm2_squared(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

double norm2(std::span<const double> v) { return std::sqrt(norm2_squared(v)); }

double norm_inf(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

Vec add(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("add: size mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

Vec sub(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("sub: size mismatch");
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

Vec scaled(std::span<const double> v, double s) {
    Vec r(v.begin(), v.end());
    for (double& x : r) x *= s;
    return r;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vec lerp(std::span<const double> a, std::span<const double> b, double t) {
    if (a.size() != b.size()) throw std::invalid_argument("lerp: size mismatch");
    Vec r(a.size());
    if (t == 0.0) {
        std::copy(a.begin(), a.end(), r.begin());
    } else if (t == 1.0) {
        std::copy(b.begin(), b.end(), r.begin());
    } else {
        for (std::size_t i = 0; i < a.size(); ++i) r[i] = (1.0 - t) * a[i] + t * b[i];
    }
    return r;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (!std::isfinite(fill)) throw NumericError("Matrix: non-finite fill value");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw std::invalid_argument("Matrix: data size does not match shape");
    require_finite(data_, "Matrix");
}

Vec Matrix::apply(std::span<const double> x) const {
    if (x.size() != cols_) throw std::invalid_argument("Matrix::apply: size mismatch");
    Vec y(rows_);
    for (std::size_t i = 0; i < rows_; ++i) y[i] = dot(row(i), x);
    return y;
}

namespace {

// Large enough to cover the rounding of a previous projection, so projecting twice is a no-op.
double feasibility_slack(double radius) { return 1e-12 * std::max(radius, 1.0); }

}  // namespace

void l1_project_inplace(std::span<double> w, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("l1_project_row: radius must be positive");
    const double total = norm1(w);
    if (total <= radius + feasibility_slack(radius)) return;

    std::vector<double> u(w.size());
    std::transform(w.begin(), w.end(), u.begin(), [](double x) { return std::abs(x); });
    std::sort(u.begin(), u.end(), std::greater<>());

    // Largest rho with u[rho] > (sum_{i<=rho} u[i] - radius) / (rho + 1).
    double cumulative = 0.0;
    double threshold = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cumulative += u[j];
        const double candidate = (cumulative - radius) / static_cast<double>(j + 1);
        if (u[j] - candidate > 0.0) threshold = candidate;
    }
    for (double& x : w) {
        const double mag = std::max(std::abs(x) - threshold, 0.0);
        x = std::copysign(mag, x);
    }
}

Vec l1_project_row(std::span<const double> w, double radius) {
    Vec r(w.begin(), w.end());
    l1_project_inplace(r, radius);
    return r;
}

}  // namespace rflow
