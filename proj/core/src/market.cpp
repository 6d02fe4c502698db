#include "eqport/market.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace eqport {

double integrate(const ScalarCurve& curve, double a, double b)
{
    const auto& g = curve.grid();
    if (!(a <= b)) {
        throw Error(ErrorCode::RangeError, "integration bounds out of order");
    }
    if (a < g.front() || b > g.back()) {
        throw Error(ErrorCode::RangeError, "integration bounds outside [0, T]");
    }
    if (a == b) {
        return 0.0;
    }
    double sum = 0.0;
    double prev_t = a;
    double prev_v = curve(a);
    auto it = std::upper_bound(g.begin(), g.end(), a);
    for (; it != g.end() && *it < b; ++it) {
        const double v = curve.values()[static_cast<std::size_t>(it - g.begin())];
        sum += 0.5 * (prev_v + v) * (*it - prev_t);
        prev_t = *it;
        prev_v = v;
    }
    sum += 0.5 * (prev_v + curve(b)) * (b - prev_t);
    return sum;
}

RunningIntegral::RunningIntegral(const ScalarCurve& curve)
    : curve_(curve)
{
    const auto& g = curve_.grid();
    const auto& v = curve_.values();
    prefix_.assign(g.size(), 0.0);
    for (std::size_t i = 1; i < g.size(); ++i) {
        prefix_[i] = prefix_[i - 1] + 0.5 * (v[i - 1] + v[i]) * (g[i] - g[i - 1]);
    }
}

double RunningIntegral::from_zero(double s) const
{
    const std::size_t i = curve_.locate(s);
    const auto& g = curve_.grid();
    if (s == g[i]) {
        return prefix_[i];
    }
    return prefix_[i] + 0.5 * (curve_[i] + curve_(s)) * (s - g[i]);
}

std::vector<double> uniform_grid(double horizon, std::size_t n_steps)
{
    if (n_steps == 0 || !(horizon > 0.0)) {
        throw Error(ErrorCode::GridError, "uniform grid needs n_steps >= 1 and a positive horizon");
    }
    std::vector<double> g(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i) {
        g[i] = horizon * static_cast<double>(i) / static_cast<double>(n_steps);
    }
    g.back() = horizon;
    return g;
}

ScalarCurve MarketModel::theta_sq() const
{
    return theta.map([](const Eigen::VectorXd& t) { return t.squaredNorm(); });
}

ScalarCurve MarketModel::r_minus(const ScalarCurve& shift) const
{
    if (!same_grid(shift.grid(), grid)) {
        throw Error(ErrorCode::GridError, "shift curve is not on the market grid");
    }
    std::vector<double> v(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        v[i] = r[i] - shift[i];
    }
    return ScalarCurve(grid, std::move(v));
}

CurveSpec CurveSpec::constant(double v)
{
    return constant(Eigen::MatrixXd::Constant(1, 1, v));
}

CurveSpec CurveSpec::constant(const Eigen::MatrixXd& v)
{
    CurveSpec c;
    c.values.push_back(v);
    return c;
}

CurveSpec CurveSpec::tabulated(std::vector<double> grid, std::vector<double> values)
{
    std::vector<Eigen::MatrixXd> m;
    m.reserve(values.size());
    for (double v : values) {
        m.push_back(Eigen::MatrixXd::Constant(1, 1, v));
    }
    return tabulated(std::move(grid), std::move(m));
}

CurveSpec CurveSpec::tabulated(std::vector<double> grid, std::vector<Eigen::MatrixXd> values)
{
    CurveSpec c;
    c.grid = std::move(grid);
    c.values = std::move(values);
    return c;
}

namespace {

std::vector<double> snap_to_horizon(std::vector<double> g, double horizon, const char* what)
{
    if (g.empty()) {
        throw Error(ErrorCode::GridError, std::string(what) + " grid is empty");
    }
    if (std::abs(g.back() - horizon) > 1e-12 * std::max(1.0, horizon)) {
        throw Error(ErrorCode::GridError, std::string(what) + " grid must end at the horizon");
    }
    g.back() = horizon;
    validate_grid(g);
    return g;
}

std::vector<double> spec_grid(const CurveSpec& c, double horizon, const char* what)
{
    if (c.values.empty()) {
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " has no values");
    }
    if (c.is_constant()) {
        if (c.values.size() != 1) {
            throw Error(ErrorCode::DimensionMismatch, std::string(what) + " constant must have one value");
        }
        return {0.0, horizon};
    }
    if (c.grid.size() != c.values.size()) {
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " grid and values differ in length");
    }
    return snap_to_horizon(c.grid, horizon, what);
}

std::vector<double> merge_grids(const std::vector<double>& a, const std::vector<double>& b, double horizon)
{
    std::vector<double> all;
    all.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(all));
    const double tol = 1e-14 * std::max(1.0, horizon);
    std::vector<double> out;
    for (double s : all) {
        if (out.empty() || s - out.back() > tol) {
            out.push_back(s);
        }
    }
    out.front() = 0.0;
    if (horizon - out.back() <= tol) {
        out.back() = horizon;
    }
    return out;
}

template<class V, class Convert>
Curve<V> expand(const CurveSpec& c, double horizon, const std::vector<double>& master, const char* what,
                Convert convert)
{
    const auto g = spec_grid(c, horizon, what);
    std::vector<V> vals;
    if (c.is_constant()) {
        vals = {convert(c.values[0]), convert(c.values[0])};
    } else {
        for (const auto& v : c.values) {
            vals.push_back(convert(v));
        }
    }
    return Curve<V>(g, std::move(vals)).resampled(master);
}

} // namespace

MarketModel build_market(const MarketSpec& spec)
{
    if (spec.dim < 1) {
        throw Error(ErrorCode::DimensionMismatch, "dim must be at least 1");
    }
    if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon)) {
        throw Error(ErrorCode::GridError, "horizon must be positive and finite");
    }
    const double T = spec.horizon;
    const int d = spec.dim;

    std::vector<double> master;
    if (!spec.grid.empty()) {
        master = snap_to_horizon(spec.grid, T, "market");
    } else if (spec.n_steps > 0) {
        master = uniform_grid(T, spec.n_steps);
    } else {
        master = {0.0, T};
    }
    for (const auto* c : {&spec.r, &spec.mu_x, &spec.sigma, &spec.mu}) {
        master = merge_grids(master, spec_grid(*c, T, "coefficient"), T);
    }
    validate_grid(master);

    auto scalar = [](const char* what) {
        return [what](const Eigen::MatrixXd& m) {
            if (m.size() != 1) {
                throw Error(ErrorCode::DimensionMismatch, std::string(what) + " must be scalar");
            }
            return m(0, 0);
        };
    };
    auto vector = [d](const Eigen::MatrixXd& m) -> Eigen::VectorXd {
        if (m.size() == 1) {
            return Eigen::VectorXd::Constant(d, m(0, 0));
        }
        if (m.size() != d || (m.rows() != 1 && m.cols() != 1)) {
            throw Error(ErrorCode::DimensionMismatch, "mu_x must have " + std::to_string(d) + " components");
        }
        return Eigen::Map<const Eigen::VectorXd>(m.data(), d);
    };
    auto matrix = [d](const Eigen::MatrixXd& m) -> Eigen::MatrixXd {
        if (m.size() == 1) {
            return m(0, 0) * Eigen::MatrixXd::Identity(d, d);
        }
        if (m.rows() != d || m.cols() != d) {
            throw Error(ErrorCode::DimensionMismatch, "sigma must be " + std::to_string(d) + "x" + std::to_string(d));
        }
        return m;
    };

    MarketModel mk;
    mk.dim = d;
    mk.horizon = T;
    mk.grid = master;
    mk.spec = spec;
    mk.r = expand<double>(spec.r, T, master, "r", scalar("r"));
    mk.mu = expand<double>(spec.mu, T, master, "mu", scalar("mu"));
    mk.mu_x = expand<Eigen::VectorXd>(spec.mu_x, T, master, "mu_x", vector);
    mk.sigma = expand<Eigen::MatrixXd>(spec.sigma, T, master, "sigma", matrix);

    std::vector<Eigen::VectorXd> theta(master.size());
    for (std::size_t i = 0; i < master.size(); ++i) {
        const Eigen::MatrixXd& s = mk.sigma[i];
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
        const auto& sv = svd.singularValues();
        const double smax = sv(0);
        const double smin = sv(sv.size() - 1);
        if (!(smin > 0.0) || smax / smin > spec.condition_bound) {
            throw Error(ErrorCode::SingularSigma,
                        "sigma is singular or ill-conditioned at s=" + std::to_string(master[i]));
        }
        const Eigen::VectorXd excess = mk.mu_x[i] - mk.r[i] * Eigen::VectorXd::Ones(d);
        theta[i] = s.fullPivLu().solve(excess);
    }
    mk.theta = VectorCurve(master, std::move(theta));
    return mk;
}

MarketModel with_required_return(const MarketModel& market, const ScalarCurve& mu)
{
    MarketModel out = market;
    out.mu = mu.resampled(market.grid);
    out.spec.mu = CurveSpec::tabulated(mu.grid(), mu.values());
    return out;
}

} // namespace eqport
