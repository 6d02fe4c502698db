#include "eqport/coeffs.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace eqport {

std::string_view utility_name(Utility u) noexcept
{
    switch (u) {
    case Utility::Quadratic:
        return "quadratic";
    case Utility::Cubic:
        return "cubic";
    case Utility::Quartic:
        return "quartic";
    case Utility::NegativePart:
        return "negative_part";
    }
    return "unknown";
}

Utility parse_utility(std::string_view name)
{
    for (Utility u : {Utility::Quadratic, Utility::Cubic, Utility::Quartic, Utility::NegativePart}) {
        if (name == utility_name(u)) {
            return u;
        }
    }
    if (name == "x-" || name == "negpart") {
        return Utility::NegativePart;
    }
    throw Error(ErrorCode::ParseError, "unknown utility '" + std::string(name) + "'");
}

double utility_second_derivative(Utility u, double x)
{
    switch (u) {
    case Utility::Quadratic:
        return 1.0;
    case Utility::Cubic:
        return -2.0 * x;
    case Utility::Quartic:
        return 3.0 * x * x;
    case Utility::NegativePart:
        break;
    }
    throw Error(ErrorCode::UtilityMismatch, "x^- has no second derivative at the kink");
}

double utility_value(Utility u, double x)
{
    switch (u) {
    case Utility::Quadratic:
        return 0.5 * x * x;
    case Utility::Cubic:
        return -x * x * x / 3.0;
    case Utility::Quartic:
        return 0.25 * x * x * x * x;
    case Utility::NegativePart:
        return x < 0.0 ? -x : 0.0;
    }
    return 0.0;
}

CoefficientCurves solve_coeffs(const MarketModel& market, Utility u, const PowerSolverOptions& opts)
{
    switch (u) {
    case Utility::Quadratic:
        return find_lambda_star(market).curves;
    case Utility::Cubic:
        return solve_cubic_coeffs(market, opts);
    case Utility::Quartic:
        return solve_quartic_coeffs(market, opts);
    case Utility::NegativePart:
        break;
    }
    throw Error(ErrorCode::UtilityMismatch, "x^- has no coefficient system; use negative_part_condition");
}

ScalarCurve equilibrium_residual(const CoefficientCurves& curves, const MarketModel& market)
{
    if (curves.utility == Utility::NegativePart) {
        throw Error(ErrorCode::UtilityMismatch, "no coefficient residual for x^-");
    }
    if (!same_grid(curves.grid(), market.grid)) {
        throw Error(ErrorCode::GridError, "coefficient curves are not on the market grid");
    }
    const std::size_t n = market.grid.size();
    std::vector<double> res(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd& th = market.theta[i];
        if (curves.utility == Utility::Quadratic) {
            if (curves.alpha[i].size() != th.size()) {
                throw Error(ErrorCode::DimensionMismatch, "alpha and theta differ in dimension");
            }
            res[i] = market.r[i] + curves.alpha[i].dot(th) - market.mu[i];
        } else {
            res[i] = market.r[i] - market.mu[i] + curves.alpha_scalar(i) * th.squaredNorm();
        }
    }
    return ScalarCurve(market.grid, std::move(res));
}

ResidualVerdict residual_verdict(const ScalarCurve& residual, double tol)
{
    ResidualVerdict v;
    for (double x : residual.values()) {
        v.sup = std::max(v.sup, std::abs(x));
    }
    v.pass = v.sup <= tol;
    return v;
}

CubicCondition necessary_condition_cubic(const MarketModel& market)
{
    const std::size_t last = market.grid.size() - 1;
    const double q = market.theta[last].squaredNorm();
    if (!(q > 1e-300)) {
        throw Error(ErrorCode::ZeroTheta, "|theta(T)|^2 = 0, eta is undefined");
    }
    CubicCondition c;
    c.eta = (market.r[last] - market.mu[last]) / q;
    const double disc = 9.0 - 16.0 * c.eta;
    if (std::abs(disc) <= 1e-12) {
        c.roots = {-0.75};
        c.double_root = true;
    } else if (disc > 0.0) {
        const double sq = std::sqrt(disc);
        c.roots = {(-3.0 - sq) / 4.0, (-3.0 + sq) / 4.0};
        c.roots.erase(std::remove_if(c.roots.begin(), c.roots.end(), [](double a) { return std::abs(a) <= 1e-15; }),
                      c.roots.end());
    }
    c.admissible = c.eta <= 9.0 / 16.0 + 1e-12;
    return c;
}

CoefficientCurves particular_solution_cubic(const MarketModel& market)
{
    const auto& g = market.grid;
    const std::size_t n = g.size();
    const ScalarCurve q = market.theta_sq();
    for (std::size_t i = 0; i < n; ++i) {
        const double gap = market.mu[i] - (market.r[i] - 0.5 * q[i]);
        if (std::abs(gap) > 1e-10) {
            throw Error(ErrorCode::PreconditionViolated, "mu differs from r - |theta|^2/2 by " + std::to_string(gap)
                                                             + " at s=" + std::to_string(g[i]));
        }
    }
    const ScalarCurve r_hat = market.r_minus(market.mu);
    const RunningIntegral ri(r_hat);
    std::vector<double> m(n);
    std::vector<double> nn(n);
    std::vector<double> gamma(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double rint = ri.to_horizon(g[i]);
        m[i] = std::exp(1.5 * rint);
        nn[i] = 2.0 * std::exp(rint);
        gamma[i] = std::exp(rint);
    }
    CoefficientCurves c;
    c.utility = Utility::Cubic;
    c.M = ScalarCurve(g, std::move(m));
    c.N = ScalarCurve(g, std::move(nn));
    c.Gamma = ScalarCurve(g, std::move(gamma));
    c.alpha = VectorCurve(g, std::vector<Eigen::VectorXd>(n, Eigen::VectorXd::Constant(1, -0.5)));
    c.r_hat = r_hat;
    std::vector<double> cons(n);
    for (std::size_t i = 0; i < n; ++i) {
        cons[i] = 0.5 * c.N.value()[i] - c.Gamma[i];
    }
    c.consistency = ScalarCurve(g, std::move(cons));
    TerminalLimit t;
    t.alpha_T = -0.5;
    t.candidates = {-0.5};
    t.target_root = true;
    c.terminal = t;
    return c;
}

Eigen::VectorXd FeedbackControl::policy(const MarketModel& market, double s, double x) const
{
    const Eigen::MatrixXd sig = market.sigma(s);
    return sig.transpose().fullPivLu().solve(gain(s)) * x;
}

FeedbackControl feedback_control(const CoefficientCurves& curves, const MarketModel& market)
{
    if (!same_grid(curves.grid(), market.grid)) {
        throw Error(ErrorCode::GridError, "coefficient curves are not on the market grid");
    }
    FeedbackControl f;
    f.utility = curves.utility;
    if (curves.utility == Utility::Quadratic) {
        if (!curves.lambda) {
            throw Error(ErrorCode::PreconditionViolated, "quadratic curves carry no multiplier");
        }
        f.gain = curves.alpha;
        f.scale_exponent = *curves.lambda;
        return f;
    }
    std::vector<Eigen::VectorXd> k(market.grid.size());
    for (std::size_t i = 0; i < k.size(); ++i) {
        k[i] = curves.alpha_scalar(i) * market.theta[i];
    }
    f.gain = VectorCurve(market.grid, std::move(k));
    f.scale_exponent = market.mu;
    return f;
}

FeedbackControl scale_gain(const FeedbackControl& control, double factor)
{
    FeedbackControl f = control;
    f.gain = control.gain.map([factor](const Eigen::VectorXd& k) -> Eigen::VectorXd { return factor * k; });
    return f;
}

FeedbackControl zero_control(const MarketModel& market, Utility u)
{
    FeedbackControl f;
    f.utility = u;
    f.gain = VectorCurve(market.grid, std::vector<Eigen::VectorXd>(market.grid.size(), Eigen::VectorXd::Zero(market.dim)));
    f.scale_exponent = market.mu;
    return f;
}

AdjointEvaluator make_adjoint_evaluator(const CoefficientCurves& curves, const MarketModel& market)
{
    if (curves.utility == Utility::NegativePart) {
        throw Error(ErrorCode::UtilityMismatch, "no adjoint representation for x^-");
    }
    if (!same_grid(curves.grid(), market.grid)) {
        throw Error(ErrorCode::GridError, "coefficient curves are not on the market grid");
    }
    return AdjointEvaluator{curves, market.theta};
}

double adjoint_coefficient(const AdjointEvaluator& ev, double t, double s, double y_t, double y_s)
{
    const double T = ev.theta.horizon();
    if (!(t >= 0.0 && t <= s && s <= T)) {
        throw Error(ErrorCode::RangeError, "adjoint needs 0 <= t <= s <= T");
    }
    const CoefficientCurves& c = ev.curves;
    const double d = y_s - y_t;
    switch (c.utility) {
    case Utility::Quadratic:
        return c.Gamma(s) * d;
    case Utility::Cubic: {
        const double a = c.alpha(s)(0);
        return d * (-(1.0 + 2.0 * a) * c.M(s) * (y_s + y_t) + (1.0 + a) * c.N.value()(s) * y_t);
    }
    case Utility::Quartic: {
        const double a = c.alpha(s)(0);
        return d * ((1.0 + 3.0 * a) * c.M(s) * (y_s * y_s + y_s * y_t + y_t * y_t)
                    - (1.0 + 2.0 * a) * c.N.value()(s) * y_t * (y_s + y_t) + (1.0 + a) * c.Gamma(s) * y_t * y_t);
    }
    case Utility::NegativePart:
        break;
    }
    throw Error(ErrorCode::UtilityMismatch, "no adjoint representation for x^-");
}

Eigen::VectorXd adjoint_lambda(const AdjointEvaluator& ev, double t, double s, double y_t, double y_s)
{
    const double c = adjoint_coefficient(ev, t, s, y_t, y_s);
    if (c == 0.0) {
        return Eigen::VectorXd::Zero(ev.theta[0].size());
    }
    return c * ev.theta(s);
}

} // namespace eqport
