#include "eqport/coeffs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace eqport {

namespace {

// Rates of the cubic and quartic systems in backward time tau = T - s:
//   dY_j/dtau = (c_j r_hat + (b_j a + e_j a^2) |theta|^2) Y_j,
// alpha = Num/Den with Num = sum num_j Y_j and Den = sum den_j Y_j.
// The last component is the closed-form exp(int_s^T r_hat).
struct PowerTable {
    Utility utility;
    int n;
    std::array<double, 4> c;
    std::array<double, 4> b;
    std::array<double, 4> e;
    std::array<double, 4> y0;
    std::array<double, 4> num;
    std::array<double, 4> den;
    int offset;
};

constexpr PowerTable kCubic{Utility::Cubic, 3,
                            {3, 2, 1, 0}, {2, 1, 0, 0}, {1, 0, 0, 0}, {1, 2, 1, 0},
                            {-1, 1, -1, 0}, {2, -1, 0, 0}, 1};
constexpr PowerTable kQuartic{Utility::Quartic, 4,
                              {4, 3, 2, 1}, {3, 2, 1, 0}, {3, 1, 0, 0}, {1, 3, 3, 1},
                              {1, -1, 1, -1}, {-3, 2, -1, 0}, 2};

using State = std::array<double, 4>;
using Series = std::vector<double>;

Series mul(const Series& a, const Series& b)
{
    const std::size_t k = a.size();
    Series r(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
        if (a[i] == 0.0) {
            continue;
        }
        for (std::size_t j = 0; i + j < k; ++j) {
            r[i + j] += a[i] * b[j];
        }
    }
    return r;
}

double eval(const Series& s, double x)
{
    double v = 0.0;
    for (std::size_t k = s.size(); k-- > 0;) {
        v = v * x + s[k];
    }
    return v;
}

struct SeriesInputs {
    Series rh;
    Series q;
};

std::vector<Series> state_series(const PowerTable& t, const Series& a, const SeriesInputs& in)
{
    const std::size_t k = a.size();
    const Series aq = mul(a, in.q);
    const Series a2q = mul(a, aq);
    std::vector<Series> ys;
    for (int j = 0; j < t.n; ++j) {
        Series rate(k, 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            rate[i] = t.c[j] * in.rh[i] + t.b[j] * aq[i] + t.e[j] * a2q[i];
        }
        Series y(k, 0.0);
        y[0] = t.y0[j];
        for (std::size_t m = 0; m + 1 < k; ++m) {
            double acc = 0.0;
            for (std::size_t i = 0; i <= m; ++i) {
                acc += rate[i] * y[m - i];
            }
            y[m + 1] = acc / static_cast<double>(m + 1);
        }
        ys.push_back(std::move(y));
    }
    return ys;
}

void num_den_series(const PowerTable& t, const std::vector<Series>& ys, Series& num, Series& den)
{
    const std::size_t k = ys.front().size();
    num.assign(k, 0.0);
    den.assign(k, 0.0);
    for (int j = 0; j < t.n; ++j) {
        for (std::size_t i = 0; i < k; ++i) {
            num[i] += t.num[j] * ys[j][i];
            den[i] += t.den[j] * ys[j][i];
        }
    }
}

double residual_coefficient(const PowerTable& t, const Series& a, const SeriesInputs& in, std::size_t order)
{
    Series num;
    Series den;
    num_den_series(t, state_series(t, a, in), num, den);
    const Series ad = mul(a, den);
    return num[order] - ad[order];
}

struct TerminalChoice {
    TerminalLimit info;
    Series alpha;
    std::vector<Series> states;
};

double coefficient_scale(const SeriesInputs& in)
{
    return std::max({std::abs(in.rh[0]), std::abs(in.q[0])});
}

// Solves the residual series order by order for alpha_1, alpha_2, ... once alpha_0 is fixed.
Series extend_alpha(const PowerTable& t, double a0, const SeriesInputs& in, std::size_t terms)
{
    Series a(terms, 0.0);
    a[0] = a0;
    const double sigma = coefficient_scale(in);
    const double ref = std::pow(std::max(sigma, 1e-300), t.offset);
    for (std::size_t j = 1; j + static_cast<std::size_t>(t.offset) < terms; ++j) {
        const std::size_t order = j + static_cast<std::size_t>(t.offset);
        a[j] = 0.0;
        const double r0 = residual_coefficient(t, a, in, order);
        a[j] = 1.0;
        const double r1 = residual_coefficient(t, a, in, order);
        const double slope = r1 - r0;
        if (std::abs(slope) <= 1e-9 * ref) {
            if (std::abs(r0) <= 1e-9 * ref * std::max(1.0, std::abs(a[j - 1]))) {
                a[j] = 0.0;
                continue;
            }
            throw Error(ErrorCode::NoTerminalLimit, "terminal expansion is resonant at order " + std::to_string(j));
        }
        double x = -r0 / slope;
        for (int it = 0; it < 30; ++it) {
            a[j] = x;
            const double fx = residual_coefficient(t, a, in, order);
            const double hstep = 1e-7 * std::max(1.0, std::abs(x));
            a[j] = x + hstep;
            const double fd = (residual_coefficient(t, a, in, order) - fx) / hstep;
            if (fx == 0.0 || fd == 0.0) {
                break;
            }
            const double dx = fx / fd;
            x -= dx;
            if (std::abs(dx) <= 1e-15 * std::max(1.0, std::abs(x))) {
                break;
            }
        }
        a[j] = x;
        if (!std::isfinite(x)) {
            throw Error(ErrorCode::NoTerminalLimit, "terminal expansion diverged at order " + std::to_string(j));
        }
    }
    return a;
}

TerminalChoice choose_cubic_terminal(const SeriesInputs& in, std::size_t terms)
{
    const PowerTable& t = kCubic;
    const double rh = in.rh[0];
    const double q = in.q[0];
    const double sigma = coefficient_scale(in);

    // Derivative condition of the consistency relation at T: -a (2 q a^2 + 3 q a + 2 r_hat) = 0.
    std::vector<double> roots;
    if (q > 0.0) {
        roots.push_back(0.0);
        const double disc = 9.0 * q * q - 16.0 * q * rh;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            roots.push_back((-3.0 * q - sq) / (4.0 * q));
            if (sq > 0.0) {
                roots.push_back((-3.0 * q + sq) / (4.0 * q));
            }
        }
    } else if (rh != 0.0) {
        roots.push_back(0.0);
    } else {
        throw Error(ErrorCode::NoTerminalLimit, "theta(T) = 0 and r_hat(T) = 0 leave alpha(T) undetermined");
    }

    struct Candidate {
        double a;
        double lambda;
    };
    std::vector<Candidate> cands;
    TerminalChoice out;
    for (double a : roots) {
        Series s(terms, 0.0);
        s[0] = a;
        Series num;
        Series den;
        num_den_series(t, state_series(t, s, in), num, den);
        if (std::abs(den[1]) <= 1e-12 * std::max(sigma, 1e-300)) {
            continue;
        }
        s[1] = 0.0;
        const double r0 = residual_coefficient(t, s, in, 2);
        s[1] = 1.0;
        const double r1 = residual_coefficient(t, s, in, 2);
        const double lambda = -2.0 * (r1 - r0) / den[1] - 1.0;
        cands.push_back({a, lambda});
        out.info.candidates.push_back(a);
    }
    if (cands.empty()) {
        throw Error(ErrorCode::NoTerminalLimit, "no non-degenerate root of the terminal condition");
    }

    const bool has_seed = q > 0.0;
    const double seed = has_seed ? -rh / q : 0.0;
    auto dist = [&](const Candidate& c) { return std::abs(c.a - seed); };
    const Candidate* pick = nullptr;
    if (has_seed) {
        for (const auto& c : cands) {
            if (dist(c) <= 1e-9 * std::max(1.0, std::abs(seed))) {
                pick = &c;
                out.info.target_root = true;
            }
        }
    }
    auto nearest = [&](auto pred) {
        const Candidate* best = nullptr;
        for (const auto& c : cands) {
            if (pred(c) && (best == nullptr || dist(c) < dist(*best))) {
                best = &c;
            }
        }
        return best;
    };
    if (pick == nullptr) {
        pick = nearest([](const Candidate& c) { return c.a != 0.0 && c.lambda > 0.0; });
    }
    if (pick == nullptr) {
        pick = nearest([](const Candidate& c) { return c.lambda > 0.0; });
    }
    if (pick == nullptr) {
        pick = nearest([](const Candidate&) { return true; });
    }
    out.info.alpha_T = pick->a;
    out.info.stability_exponent = pick->lambda;
    out.info.well_posed = pick->lambda > 0.0 || out.info.target_root;
    out.alpha = extend_alpha(t, pick->a, in, terms);
    out.states = state_series(t, out.alpha, in);
    return out;
}

TerminalChoice choose_quartic_terminal(const SeriesInputs& in, std::size_t terms)
{
    // The derivative condition reduces to -3 |theta|^2 a^3 = 0, so the regular branch starts at 0.
    TerminalChoice out;
    out.info.alpha_T = 0.0;
    out.info.candidates = {0.0};
    out.info.stability_exponent = std::numeric_limits<double>::quiet_NaN();
    out.info.well_posed = true;
    out.info.target_root = in.rh[0] == 0.0;
    out.alpha = extend_alpha(kQuartic, 0.0, in, terms);
    out.states = state_series(kQuartic, out.alpha, in);
    return out;
}

// Largest tau for which the truncated series are accurate to roughly machine precision.
double series_radius(const TerminalChoice& tc)
{
    double radius = std::numeric_limits<double>::infinity();
    auto bound = [&](const Series& s) {
        double scale = 0.0;
        for (double c : s) {
            scale = std::max(scale, std::abs(c));
        }
        if (scale == 0.0) {
            return;
        }
        const std::size_t k = s.size();
        for (std::size_t j = k - 3; j < k; ++j) {
            if (s[j] != 0.0) {
                radius = std::min(radius, std::pow(1e-17 * scale / std::abs(s[j]), 1.0 / static_cast<double>(j)));
            }
        }
    };
    bound(tc.alpha);
    for (const auto& s : tc.states) {
        bound(s);
    }
    return radius;
}

struct Coeffs {
    double rh;
    double q;
};

State rates(const PowerTable& t, double a, Coeffs k, const State& y)
{
    State d{};
    for (int j = 0; j < t.n; ++j) {
        d[j] = (t.c[j] * k.rh + (t.b[j] * a + t.e[j] * a * a) * k.q) * y[j];
    }
    return d;
}

void num_den(const PowerTable& t, const State& y, double& num, double& den)
{
    num = 0.0;
    den = 0.0;
    for (int j = 0; j < t.n; ++j) {
        num += t.num[j] * y[j];
        den += t.den[j] * y[j];
    }
}

CoefficientCurves flat_market(const PowerTable& t, const MarketModel& market, const ScalarCurve& r_hat)
{
    const auto& g = market.grid;
    const std::size_t n = g.size();
    CoefficientCurves c;
    c.utility = t.utility;
    c.M = ScalarCurve(g, std::vector<double>(n, t.y0[0]));
    c.N = ScalarCurve(g, std::vector<double>(n, t.y0[1]));
    if (t.n == 3) {
        c.Gamma = ScalarCurve(g, std::vector<double>(n, 1.0));
    } else {
        c.Gamma = ScalarCurve(g, std::vector<double>(n, t.y0[2]));
        c.Phi = ScalarCurve(g, std::vector<double>(n, 1.0));
    }
    c.alpha = VectorCurve(g, std::vector<Eigen::VectorXd>(n, Eigen::VectorXd::Zero(1)));
    c.r_hat = r_hat;
    c.consistency = ScalarCurve(g, std::vector<double>(n, 0.0));
    c.flat_market_shortcut = true;
    TerminalLimit info;
    info.candidates = {0.0};
    c.terminal = info;
    return c;
}

CoefficientCurves solve_power(const PowerTable& t, const MarketModel& market, const PowerSolverOptions& opts)
{
    const auto& g = market.grid;
    const std::size_t n = g.size();
    const double T = market.horizon;
    const ScalarCurve r_hat = market.r_minus(market.mu);
    const ScalarCurve q = market.theta_sq();

    // For the quartic system alpha = 0 keeps every state constant once r_hat vanishes, whatever theta is.
    bool flat = true;
    for (std::size_t i = 0; i < n && flat; ++i) {
        flat = (t.utility == Utility::Quartic || q[i] <= 1e-28) && std::abs(r_hat[i]) <= 1e-15;
    }
    if (flat) {
        if (!opts.flat_market_shortcut) {
            throw Error(ErrorCode::DegenerateDenominator, "flat market: the alpha ratio is 0/0 on the whole horizon");
        }
        return flat_market(t, market, r_hat);
    }

    // Series start on the trailing stretch where r_hat and |theta|^2 stay affine.
    const double h_last = g[n - 1] - g[n - 2];
    SeriesInputs in;
    const auto terms = static_cast<std::size_t>(std::max(8, opts.series_terms));
    in.rh.assign(terms, 0.0);
    in.q.assign(terms, 0.0);
    in.rh[0] = r_hat[n - 1];
    in.rh[1] = (r_hat[n - 2] - r_hat[n - 1]) / h_last;
    in.q[0] = q[n - 1];
    in.q[1] = (q[n - 2] - q[n - 1]) / h_last;

    TerminalChoice tc = t.utility == Utility::Cubic ? choose_cubic_terminal(in, terms)
                                                   : choose_quartic_terminal(in, terms);

    std::size_t affine_end = n - 2;
    auto on_line = [&](std::size_t i) {
        const double tau = T - g[i];
        const double er = std::abs(r_hat[i] - (in.rh[0] + in.rh[1] * tau));
        const double eq = std::abs(q[i] - (in.q[0] + in.q[1] * tau));
        const double tol_r = 1e-12 * std::max({1e-300, std::abs(r_hat[i]), std::abs(in.rh[0])});
        const double tol_q = 1e-12 * std::max({1e-300, q[i], in.q[0]});
        return er <= tol_r && eq <= tol_q;
    };
    while (affine_end > 0 && on_line(affine_end - 1)) {
        --affine_end;
    }
    const double tau_affine = T - g[affine_end];
    const double tau_cap = std::min({tau_affine, opts.series_fraction * T, series_radius(tc)});

    std::size_t start = n - 1;
    while (start > 0 && T - g[start - 1] <= tau_cap * (1.0 + 1e-12)) {
        --start;
    }

    const RunningIntegral rint(r_hat);
    const double rT = rint.from_zero(T);
    auto closed = [&](double s) { return std::exp(rT - rint.from_zero(s)); };
    auto coeffs_at = [&](double s) { return Coeffs{r_hat(s), q(s)}; };
    const int last = t.n - 1;

    std::vector<State> ys(n);
    std::vector<double> alpha(n);
    for (std::size_t i = start; i < n; ++i) {
        const double tau = T - g[i];
        for (int j = 0; j < last; ++j) {
            ys[i][j] = eval(tc.states[j], tau);
        }
        ys[i][last] = closed(g[i]);
        alpha[i] = eval(tc.alpha, tau);
    }
    ys[n - 1] = State{};
    for (int j = 0; j < t.n; ++j) {
        ys[n - 1][j] = t.y0[j];
    }
    alpha[n - 1] = tc.info.alpha_T;
    tc.info.series_span = T - g[start];

    auto ratio = [&](const State& y, double s) {
        double nu = 0.0;
        double de = 0.0;
        num_den(t, y, nu, de);
        if (!(std::abs(de) >= opts.degenerate_tol)) {
            throw Error(ErrorCode::DegenerateDenominator,
                        "alpha denominator " + std::to_string(de) + " at s=" + std::to_string(s));
        }
        return nu / de;
    };

    auto rk4_step = [&](double s_right, const State& y_right, double a_right, double s_left) {
        const double h = s_right - s_left;
        const double s_mid = 0.5 * (s_left + s_right);
        const Coeffs c_right = coeffs_at(s_right);
        const Coeffs c_mid = coeffs_at(s_mid);
        const Coeffs c_left = coeffs_at(s_left);
        auto advance = [&](const State& base, const State& slope, double w, double s_at) {
            State y = base;
            for (int j = 0; j < last; ++j) {
                y[j] += w * slope[j];
            }
            y[last] = closed(s_at);
            return y;
        };
        const State k1 = rates(t, a_right, c_right, y_right);
        const State y2 = advance(y_right, k1, 0.5 * h, s_mid);
        const State k2 = rates(t, ratio(y2, s_mid), c_mid, y2);
        const State y3 = advance(y_right, k2, 0.5 * h, s_mid);
        const State k3 = rates(t, ratio(y3, s_mid), c_mid, y3);
        const State y4 = advance(y_right, k3, h, s_left);
        const State k4 = rates(t, ratio(y4, s_left), c_left, y4);
        State out = y_right;
        for (int j = 0; j < last; ++j) {
            out[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        out[last] = closed(s_left);
        return out;
    };

    std::size_t node = start;
    if (start == n - 1) {
        // The first grid interval is longer than the accurate series span: start off-grid.
        const double tau0 = std::max(tau_cap, 0.0);
        const double s0 = T - tau0;
        State y0{};
        for (int j = 0; j < last; ++j) {
            y0[j] = eval(tc.states[j], tau0);
        }
        y0[last] = closed(s0);
        const double a0 = eval(tc.alpha, tau0);
        node = n - 2;
        ys[node] = rk4_step(s0, y0, a0, g[node]);
        alpha[node] = ratio(ys[node], g[node]);
        tc.info.series_span = tau0;
    }
    for (std::size_t i = node; i-- > 0;) {
        ys[i] = rk4_step(g[i + 1], ys[i + 1], alpha[i + 1], g[i]);
        alpha[i] = ratio(ys[i], g[i]);
        for (int j = 0; j < t.n; ++j) {
            if (!std::isfinite(ys[i][j])) {
                throw Error(ErrorCode::DegenerateDenominator, "non-finite state at s=" + std::to_string(g[i]));
            }
        }
    }

    std::vector<std::vector<double>> cols(static_cast<std::size_t>(t.n), std::vector<double>(n));
    std::vector<double> resid(n);
    std::vector<Eigen::VectorXd> al(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < t.n; ++j) {
            cols[static_cast<std::size_t>(j)][i] = ys[i][j];
        }
        double nu = 0.0;
        double de = 0.0;
        num_den(t, ys[i], nu, de);
        resid[i] = nu - alpha[i] * de;
        al[i] = Eigen::VectorXd::Constant(1, alpha[i]);
    }

    CoefficientCurves c;
    c.utility = t.utility;
    c.M = ScalarCurve(g, cols[0]);
    c.N = ScalarCurve(g, cols[1]);
    if (t.n == 3) {
        c.Gamma = ScalarCurve(g, cols[2]);
    } else {
        c.Gamma = ScalarCurve(g, cols[2]);
        c.Phi = ScalarCurve(g, cols[3]);
    }
    c.alpha = VectorCurve(g, std::move(al));
    c.r_hat = r_hat;
    c.consistency = ScalarCurve(g, std::move(resid));
    c.terminal = tc.info;
    return c;
}

} // namespace

CoefficientCurves solve_cubic_coeffs(const MarketModel& market, const PowerSolverOptions& opts)
{
    return solve_power(kCubic, market, opts);
}

CoefficientCurves solve_quartic_coeffs(const MarketModel& market, const PowerSolverOptions& opts)
{
    return solve_power(kQuartic, market, opts);
}

} // namespace eqport
