#pragma once

#include "eqport/curve.hpp"
#include "eqport/market.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace eqport {

enum class Utility { Quadratic, Cubic, Quartic, NegativePart };

std::string_view utility_name(Utility u) noexcept;
Utility parse_utility(std::string_view name);

/// h''(x) for the power utilities (x^2/2, -x^3/3, x^4/4).
double utility_second_derivative(Utility u, double x);
/// h(x) for the four utilities.
double utility_value(Utility u, double x);

/// How alpha(T) was obtained for the cubic and quartic systems.
struct TerminalLimit {
    double alpha_T = 0.0;
    std::vector<double> candidates;
    /// Backward growth exponent of perturbations around the chosen branch; positive means they decay.
    double stability_exponent = 0.0;
    bool well_posed = true;
    bool target_root = false;
    /// Length of the trailing interval covered by the power-series start.
    double series_span = 0.0;
};

struct CoefficientCurves {
    Utility utility = Utility::Quadratic;
    ScalarCurve M;
    std::optional<ScalarCurve> N;
    ScalarCurve Gamma;
    std::optional<ScalarCurve> Phi;
    /// d-vector for the quadratic utility, 1-vector (scalar alpha) for cubic and quartic.
    VectorCurve alpha;
    std::optional<ScalarCurve> lambda;
    ScalarCurve r_hat;
    /// Pointwise residual of the consistency relation (identically zero for the quadratic utility).
    ScalarCurve consistency;
    std::optional<TerminalLimit> terminal;
    bool flat_market_shortcut = false;

    [[nodiscard]] const std::vector<double>& grid() const { return M.grid(); }
    [[nodiscard]] double alpha_scalar(std::size_t i) const { return alpha[i](0); }
};

struct PowerSolverOptions {
    bool flat_market_shortcut = true;
    double degenerate_tol = 1e-10;
    /// Upper bound on the series start as a fraction of the horizon.
    double series_fraction = 0.25;
    int series_terms = 24;
};

CoefficientCurves solve_quadratic_coeffs(const MarketModel& market, const ScalarCurve& lambda);

struct LambdaStar {
    ScalarCurve lambda;
    CoefficientCurves curves;
    double residual_sup = 0.0;
};

LambdaStar find_lambda_star(const MarketModel& market);

CoefficientCurves solve_cubic_coeffs(const MarketModel& market, const PowerSolverOptions& opts = {});
CoefficientCurves solve_quartic_coeffs(const MarketModel& market, const PowerSolverOptions& opts = {});

/// Dispatches to the solver for the given power utility (quadratic uses lambda*).
CoefficientCurves solve_coeffs(const MarketModel& market, Utility u, const PowerSolverOptions& opts = {});

/// Pointwise target residual: r + alpha.theta - mu (quadratic) or r_hat + alpha |theta|^2 (cubic, quartic).
ScalarCurve equilibrium_residual(const CoefficientCurves& curves, const MarketModel& market);

struct ResidualVerdict {
    double sup = 0.0;
    bool pass = false;
};

ResidualVerdict residual_verdict(const ScalarCurve& residual, double tol = 1e-6);

struct CubicCondition {
    double eta = 0.0;
    std::vector<double> roots;
    bool double_root = false;
    bool admissible = false;
};

CubicCondition necessary_condition_cubic(const MarketModel& market);

CoefficientCurves particular_solution_cubic(const MarketModel& market);

/// Linear feedback pi_s(x) = (sigma_s^T)^{-1} k_s x.
struct FeedbackControl {
    VectorCurve gain;
    Utility utility = Utility::Quadratic;
    /// Exponent l of the transformation Y_s = X_s exp(int_s^T l).
    ScalarCurve scale_exponent;

    [[nodiscard]] Eigen::VectorXd policy(const MarketModel& market, double s, double x) const;
};

FeedbackControl feedback_control(const CoefficientCurves& curves, const MarketModel& market);

/// Same control with the gain multiplied by factor.
FeedbackControl scale_gain(const FeedbackControl& control, double factor);

/// Zero gain; the transformation exponent is mu.
FeedbackControl zero_control(const MarketModel& market, Utility u);

struct AdjointEvaluator {
    CoefficientCurves curves;
    VectorCurve theta;
};

AdjointEvaluator make_adjoint_evaluator(const CoefficientCurves& curves, const MarketModel& market);

/// Scalar c with Lambda_s^t = c * theta_s.
double adjoint_coefficient(const AdjointEvaluator& ev, double t, double s, double y_t, double y_s);

Eigen::VectorXd adjoint_lambda(const AdjointEvaluator& ev, double t, double s, double y_t, double y_s);

/// Writes s, M, N, Gamma, Phi, alpha_1..alpha_d, lambda, residual at 17 significant digits.
void write_coefficients_csv(std::ostream& os, const CoefficientCurves& curves, const ScalarCurve& residual);

struct CoefficientTable {
    CoefficientCurves curves;
    ScalarCurve residual;
};

CoefficientTable read_coefficients_csv(std::istream& is, Utility utility);

} // namespace eqport
