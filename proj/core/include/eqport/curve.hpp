#pragma once

#include "eqport/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace eqport {

namespace detail {

inline bool all_finite(double v) { return std::isfinite(v); }
inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }
inline bool all_finite(const Eigen::MatrixXd& v) { return v.allFinite(); }

inline std::pair<Eigen::Index, Eigen::Index> shape_of(double) { return {1, 1}; }
inline std::pair<Eigen::Index, Eigen::Index> shape_of(const Eigen::VectorXd& v) { return {v.size(), 1}; }
inline std::pair<Eigen::Index, Eigen::Index> shape_of(const Eigen::MatrixXd& v) { return {v.rows(), v.cols()}; }

inline double lerp(double a, double b, double w) { return a + w * (b - a); }
inline Eigen::VectorXd lerp(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double w) { return a + w * (b - a); }
inline Eigen::MatrixXd lerp(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double w) { return a + w * (b - a); }

} // namespace detail

/// Validates a time grid: starts at 0, strictly increasing, at least two points.
inline void validate_grid(const std::vector<double>& grid)
{
    if (grid.size() < 2) {
        throw Error(ErrorCode::GridError, "grid needs at least two points");
    }
    if (grid.front() != 0.0) {
        throw Error(ErrorCode::GridError, "grid must start at 0");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i])) {
            throw Error(ErrorCode::GridError, "grid contains a non-finite time");
        }
        if (i > 0 && !(grid[i] > grid[i - 1])) {
            throw Error(ErrorCode::GridError, "grid is not strictly increasing at index " + std::to_string(i));
        }
    }
}

/// Piecewise-linear curve on a time grid [0, T].
template<class V>
class Curve
{
public:
    using value_type = V;

    Curve() = default;

    Curve(std::vector<double> grid, std::vector<V> values)
        : grid_(std::move(grid)), values_(std::move(values))
    {
        validate_grid(grid_);
        if (values_.size() != grid_.size()) {
            throw Error(ErrorCode::DimensionMismatch, "curve has " + std::to_string(values_.size())
                                                          + " values for " + std::to_string(grid_.size()) + " grid points");
        }
        const auto shape = detail::shape_of(values_.front());
        for (const auto& v : values_) {
            if (detail::shape_of(v) != shape) {
                throw Error(ErrorCode::DimensionMismatch, "curve value dimension changes along the grid");
            }
            if (!detail::all_finite(v)) {
                throw Error(ErrorCode::RangeError, "curve contains non-finite values");
            }
        }
    }

    static Curve constant(double horizon, V value)
    {
        return Curve({0.0, horizon}, {value, value});
    }

    [[nodiscard]] const std::vector<double>& grid() const noexcept { return grid_; }
    [[nodiscard]] const std::vector<V>& values() const noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return grid_.size(); }
    [[nodiscard]] bool empty() const noexcept { return grid_.empty(); }
    [[nodiscard]] double horizon() const { return grid_.back(); }
    [[nodiscard]] const V& operator[](std::size_t i) const { return values_[i]; }

    /// Index i of the interval [grid[i], grid[i+1]] containing s; the last interval owns s = T.
    [[nodiscard]] std::size_t locate(double s) const
    {
        if (!(s >= grid_.front() && s <= grid_.back())) {
            throw Error(ErrorCode::RangeError, "time " + std::to_string(s) + " outside [0, "
                                                   + std::to_string(grid_.back()) + "]");
        }
        auto it = std::upper_bound(grid_.begin(), grid_.end(), s);
        std::size_t i = static_cast<std::size_t>(it - grid_.begin());
        if (i == 0) {
            return 0;
        }
        return std::min(i - 1, grid_.size() - 2);
    }

    [[nodiscard]] V operator()(double s) const
    {
        const std::size_t i = locate(s);
        if (s == grid_[i]) {
            return values_[i];
        }
        if (s == grid_[i + 1]) {
            return values_[i + 1];
        }
        const double w = (s - grid_[i]) / (grid_[i + 1] - grid_[i]);
        return detail::lerp(values_[i], values_[i + 1], w);
    }

    [[nodiscard]] Curve resampled(const std::vector<double>& grid) const
    {
        std::vector<V> v;
        v.reserve(grid.size());
        for (double s : grid) {
            v.push_back((*this)(s));
        }
        return Curve(grid, std::move(v));
    }

    template<class F>
    [[nodiscard]] auto map(F&& f) const
    {
        using R = std::decay_t<decltype(f(values_.front()))>;
        std::vector<R> out;
        out.reserve(values_.size());
        for (const auto& v : values_) {
            out.push_back(f(v));
        }
        return Curve<R>(grid_, std::move(out));
    }

private:
    std::vector<double> grid_;
    std::vector<V> values_;
};

using ScalarCurve = Curve<double>;
using VectorCurve = Curve<Eigen::VectorXd>;
using MatrixCurve = Curve<Eigen::MatrixXd>;

/// Trapezoidal quadrature of a scalar curve over [a, b] on its grid refined with a and b.
double integrate(const ScalarCurve& curve, double a, double b);

/// Precomputed running integral of a scalar curve; integral(a, b) agrees with integrate().
class RunningIntegral
{
public:
    RunningIntegral() = default;
    explicit RunningIntegral(const ScalarCurve& curve);

    [[nodiscard]] double from_zero(double s) const;
    [[nodiscard]] double integral(double a, double b) const { return from_zero(b) - from_zero(a); }
    [[nodiscard]] double to_horizon(double s) const { return integral(s, curve_.horizon()); }

private:
    ScalarCurve curve_;
    std::vector<double> prefix_;
};

/// True if two grids are identical point by point.
inline bool same_grid(const std::vector<double>& a, const std::vector<double>& b)
{
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

} // namespace eqport
