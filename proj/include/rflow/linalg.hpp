#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rflow {

/// Dense real vector. Ambient points, velocities and displacements all use it.
using Vec = std::vector<double>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a computation produces or receives non-finite values, or diverges.
class NumericError : public Error {
public:
    using Error::Error;
};

bool all_finite(std::span<const double> v);

/// Throws NumericError naming `what` if any entry is NaN or infinite.
void require_finite(std::span<const double> v, const char* what);

double dot(std::span<const double> a, std::span<const double> b);
double norm1(std::span<const double> v);
double norm2(std::span<const double> v);
double norm2_squared(std::span<const double> v);
double norm_inf(std::span<const double> v);

Vec add(std::span<const double> a, std::span<const double> b);
Vec sub(std::span<const double> a, std::span<const double> b);
Vec scaled(std::span<const double> v, double s);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// (1 - t) a + t b, exact at t = 0 and t = 1.
Vec lerp(std::span<const double> a, std::span<const double> b, double t);

/// Row-major dense matrix with immutable shape.
class Matrix {
public:
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<const double> data() const { return data_; }

    Vec apply(std::span<const double> x) const;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

/// Euclidean projection of `w` onto the l1 ball of radius `radius`.
///
/// Sort-and-threshold algorithm (the simplex projection applied to |w|).
/// Vectors already inside the ball, up to a rounding slack of 1e-12 * max(radius, 1),
/// are returned unchanged, which makes the map idempotent in floating point.
Vec l1_project_row(std::span<const double> w, double radius);

/// In-place variant of l1_project_row.
void l1_project_inplace(std::span<double> w, double radius);

}  // namespace rflow
