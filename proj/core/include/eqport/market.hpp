#pragma once

#include "eqport/curve.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eqport {

/// Raw description of one coefficient: a constant, or values on its own grid.
/// Scalars are stored as 1x1 matrices; a scalar given for a vector field is broadcast,
/// and a scalar given for the volatility matrix means scalar * identity.
struct CurveSpec {
    std::vector<double> grid;
    std::vector<Eigen::MatrixXd> values;

    [[nodiscard]] bool is_constant() const { return grid.empty(); }

    static CurveSpec constant(double v);
    static CurveSpec constant(const Eigen::MatrixXd& v);
    static CurveSpec tabulated(std::vector<double> grid, std::vector<double> values);
    static CurveSpec tabulated(std::vector<double> grid, std::vector<Eigen::MatrixXd> values);
};

struct MarketSpec {
    int dim = 1;
    double horizon = 1.0;
    std::vector<double> grid;
    std::size_t n_steps = 0;
    CurveSpec r = CurveSpec::constant(0.0);
    CurveSpec mu_x = CurveSpec::constant(0.0);
    CurveSpec sigma = CurveSpec::constant(1.0);
    CurveSpec mu = CurveSpec::constant(0.0);
    double condition_bound = 1e8;
};

/// Parses a market description from JSON text (fields dim, horizon, grid, r, mu_x, sigma, mu).
MarketSpec parse_market_spec(std::string_view json_text);

/// Serializes a market description back to JSON text.
std::string market_spec_to_json(const MarketSpec& spec, int indent = 2);

class MarketModel
{
public:
    int dim = 1;
    double horizon = 1.0;
    std::vector<double> grid;
    ScalarCurve r;
    VectorCurve mu_x;
    MatrixCurve sigma;
    VectorCurve theta;
    ScalarCurve mu;
    MarketSpec spec;

    /// |theta|^2 at the grid points, interpolated linearly.
    [[nodiscard]] ScalarCurve theta_sq() const;

    /// r - shift at the grid points (shift on the same grid).
    [[nodiscard]] ScalarCurve r_minus(const ScalarCurve& shift) const;
};

MarketModel build_market(const MarketSpec& spec);

/// Same market description with the required-return curve replaced.
MarketModel with_required_return(const MarketModel& market, const ScalarCurve& mu);

/// Builds a uniform grid of n_steps intervals on [0, horizon].
std::vector<double> uniform_grid(double horizon, std::size_t n_steps);

} // namespace eqport
