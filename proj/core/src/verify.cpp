#include "eqport/verify.hpp"

#include "engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace eqport {

std::string_view mode_name(PerturbationMode m) noexcept
{
    return m == PerturbationMode::Frozen ? "frozen" : "feedback";
}

PerturbationMode parse_mode(std::string_view name)
{
    if (name == "frozen" || name == "open_loop") {
        return PerturbationMode::Frozen;
    }
    if (name == "feedback") {
        return PerturbationMode::Feedback;
    }
    throw Error(ErrorCode::ParseError, "unknown perturbation mode '" + std::string(name) + "'");
}

std::string_view tri_state_name(TriState s) noexcept
{
    switch (s) {
    case TriState::Equality:
        return "EQUALITY";
    case TriState::Holds:
        return "HOLDS";
    case TriState::Fails:
        return "FAILS";
    case TriState::NotApplicable:
        break;
    }
    return "NOT_APPLICABLE";
}

std::vector<Eigen::VectorXd> spike_dictionary(int dim)
{
    std::vector<Eigen::VectorXd> out;
    auto add = [&](const Eigen::VectorXd& v) {
        for (const auto& w : out) {
            if (w == v) {
                return;
            }
        }
        out.push_back(v);
    };
    for (int i = 0; i < dim; ++i) {
        add(Eigen::VectorXd::Unit(dim, i));
        add(-Eigen::VectorXd::Unit(dim, i));
    }
    add(Eigen::VectorXd::Ones(dim));
    add(-Eigen::VectorXd::Ones(dim));
    return out;
}

namespace {

// h(z + d) - h(z), expanded so that d = 0 gives exactly 0.
double utility_increment(Utility u, double z, double d)
{
    switch (u) {
    case Utility::Quadratic:
        return d * (z + 0.5 * d);
    case Utility::Cubic:
        return -d * (3.0 * z * z + 3.0 * z * d + d * d) / 3.0;
    case Utility::Quartic:
        return d * (4.0 * z * z * z + 6.0 * z * z * d + 4.0 * z * d * d + d * d * d) / 4.0;
    case Utility::NegativePart:
        break;
    }
    throw Error(ErrorCode::UtilityMismatch, "spike test is defined for the power utilities");
}

struct MeanStd {
    double mean = 0.0;
    double std_error = 0.0;
};

template<class Get>
MeanStd mean_std(std::size_t n, Get get)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += get(i);
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = get(i) - mean;
        ss += d * d;
    }
    const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

std::size_t index_of(const std::vector<double>& times, double s)
{
    const auto it = std::lower_bound(times.begin(), times.end(), s);
    if (it == times.end() || *it != s) {
        throw Error(ErrorCode::GridError, "time " + std::to_string(s) + " missing from the simulation grid");
    }
    return static_cast<std::size_t>(it - times.begin());
}

// Closed-form growth of E_t[Y_s^n]/Y_t^n for the linear feedback in the transformed problem.
class MomentModel
{
public:
    MomentModel(const MarketModel& market, const FeedbackControl& control)
    {
        const std::size_t n = market.grid.size();
        std::vector<double> drift(n);
        std::vector<double> k2(n);
        std::vector<double> rhat(n);
        for (std::size_t i = 0; i < n; ++i) {
            rhat[i] = market.r[i] - control.scale_exponent[i];
            drift[i] = rhat[i] + control.gain[i].dot(market.theta[i]);
            k2[i] = control.gain[i].squaredNorm();
        }
        drift_ = RunningIntegral(ScalarCurve(market.grid, std::move(drift)));
        k2_ = RunningIntegral(ScalarCurve(market.grid, std::move(k2)));
        rhat_ = RunningIntegral(ScalarCurve(market.grid, std::move(rhat)));
        ell_ = RunningIntegral(control.scale_exponent);
    }

    [[nodiscard]] double growth(int n, double t, double s) const
    {
        const double nn = n;
        return std::exp(nn * drift_.integral(t, s) + 0.5 * nn * (nn - 1.0) * k2_.integral(t, s));
    }

    [[nodiscard]] double rhat_to_horizon(double s) const { return rhat_.to_horizon(s); }
    [[nodiscard]] double ell_to_horizon(double s) const { return ell_.to_horizon(s); }

private:
    RunningIntegral drift_;
    RunningIntegral k2_;
    RunningIntegral rhat_;
    RunningIntegral ell_;
};

void check_control(const MarketModel& market, const FeedbackControl& control)
{
    if (!same_grid(control.gain.grid(), market.grid) || !same_grid(control.scale_exponent.grid(), market.grid)) {
        throw Error(ErrorCode::GridError, "control is not on the market grid");
    }
}

double coefficient_from_moments(const AdjointEvaluator& ev, double s, double y, double m1, double m2, double m3)
{
    const CoefficientCurves& c = ev.curves;
    switch (c.utility) {
    case Utility::Quadratic:
        return c.Gamma(s) * (m1 - y);
    case Utility::Cubic: {
        const double a = c.alpha(s)(0);
        return -(1.0 + 2.0 * a) * c.M(s) * (m2 - y * y) + (1.0 + a) * c.N.value()(s) * y * (m1 - y);
    }
    case Utility::Quartic: {
        const double a = c.alpha(s)(0);
        return (1.0 + 3.0 * a) * c.M(s) * (m3 - y * y * y) - (1.0 + 2.0 * a) * c.N.value()(s) * y * (m2 - y * y)
               + (1.0 + a) * c.Gamma(s) * y * y * (m1 - y);
    }
    case Utility::NegativePart:
        break;
    }
    throw Error(ErrorCode::UtilityMismatch, "no adjoint representation for x^-");
}

double expected_second_derivative(Utility u, const MomentModel& mm, double t, double T, double y)
{
    switch (u) {
    case Utility::Quadratic:
        return 1.0;
    case Utility::Cubic:
        return -2.0 * y * (mm.growth(1, t, T) - 1.0);
    case Utility::Quartic:
        return 3.0 * y * y * (mm.growth(2, t, T) - 2.0 * mm.growth(1, t, T) + 1.0);
    case Utility::NegativePart:
        break;
    }
    throw Error(ErrorCode::UtilityMismatch, "x^- has no second derivative at the kink");
}

double predicted_slope(const AdjointEvaluator& ev, const MarketModel& market, const MomentModel& mm, Utility u,
                       double t, double eps, double y, const Eigen::VectorXd& v)
{
    const double T = market.horizon;
    const double h2 = expected_second_derivative(u, mm, t, T, y);
    auto integrand = [&](double s) {
        const double m1 = y * mm.growth(1, t, s);
        const double m2 = y * y * mm.growth(2, t, s);
        const double m3 = y * y * y * mm.growth(3, t, s);
        const double c = coefficient_from_moments(ev, s, y, m1, m2, m3);
        const double first = c * v.dot(market.theta(s));
        const double second = 0.5 * v.squaredNorm() * std::exp(2.0 * mm.rhat_to_horizon(s)) * h2;
        return first + second;
    };
    const int panels = 4;
    const double h = eps / panels;
    double sum = integrand(t) + integrand(t + eps);
    for (int i = 1; i < panels; ++i) {
        sum += (i % 2 == 1 ? 4.0 : 2.0) * integrand(t + i * h);
    }
    return sum * h / 3.0 / eps;
}

} // namespace

double expected_adjoint_coefficient(const AdjointEvaluator& ev, const MarketModel& market,
                                    const FeedbackControl& control, double t, double s, double y_t)
{
    if (!(t >= 0.0 && t <= s && s <= market.horizon)) {
        throw Error(ErrorCode::RangeError, "adjoint needs 0 <= t <= s <= T");
    }
    if (s == t) {
        return 0.0;
    }
    check_control(market, control);
    const MomentModel mm(market, control);
    return coefficient_from_moments(ev, s, y_t, y_t * mm.growth(1, t, s), y_t * y_t * mm.growth(2, t, s),
                                    y_t * y_t * y_t * mm.growth(3, t, s));
}

SpikeTestResult spike_perturbation_test(const MarketModel& market, const FeedbackControl& control, Utility utility,
                                        const PerturbationSpec& spec, const AdjointEvaluator* ev)
{
    if (utility == Utility::NegativePart) {
        throw Error(ErrorCode::UtilityMismatch, "use negative_part_condition for x^-");
    }
    check_control(market, control);
    const double T = market.horizon;
    const double t = spec.t;
    if (!(t >= 0.0 && t < T)) {
        throw Error(ErrorCode::RangeError, "spike time must satisfy 0 <= t < T");
    }
    if (spec.epsilons.empty() || spec.n_paths < 2) {
        throw Error(ErrorCode::RangeError, "spike test needs epsilons and at least two paths");
    }
    std::vector<double> eps = spec.epsilons;
    std::sort(eps.begin(), eps.end(), std::greater<>());
    for (double e : eps) {
        if (!(e > 0.0)) {
            throw Error(ErrorCode::RangeError, "epsilon must be positive");
        }
        if (t + e > T * (1.0 + 1e-12)) {
            throw Error(ErrorCode::HorizonError, "t + eps = " + std::to_string(t + e) + " exceeds T");
        }
    }
    const std::vector<Eigen::VectorXd> vs = spec.vs.empty() ? spike_dictionary(market.dim) : spec.vs;
    for (const auto& v : vs) {
        if (v.size() != market.dim) {
            throw Error(ErrorCode::DimensionMismatch, "spike value has the wrong dimension");
        }
        if (!v.allFinite()) {
            throw Error(ErrorCode::NonAdmissible, "spike value must be finite");
        }
    }

    std::vector<double> extra{t};
    for (double e : eps) {
        extra.push_back(std::min(T, t + e));
    }
    const auto plan = detail::make_plan(market, control, simulation_times(0.0, T, spec.n_steps, extra),
                                        Scheme::ExactLog, Measure::Physical);
    const auto& times = plan.times;
    const std::size_t steps = times.size() - 1;
    const std::size_t it = index_of(times, t);
    std::vector<std::size_t> ie;
    for (double e : eps) {
        ie.push_back(index_of(times, std::min(T, t + e)));
    }
    const std::size_t window_end = ie.front();

    const MomentModel mm(market, control);
    std::vector<double> ell_suffix(times.size());
    std::vector<double> frozen_suffix(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        ell_suffix[i] = std::exp(mm.ell_to_horizon(times[i]));
        frozen_suffix[i] = std::exp(mm.rhat_to_horizon(times[i]));
    }

    const std::size_t nv = vs.size();
    const std::size_t ne = eps.size();
    const int d = market.dim;
    Eigen::MatrixXd diffs(static_cast<Eigen::Index>(spec.n_paths), static_cast<Eigen::Index>(nv * ne));
    std::vector<double> y_at_t(spec.n_paths);
    const NormalStream rng(spec.seed, 0);

    detail::parallel_blocks(spec.n_paths, spec.workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> y(times.size());
        std::vector<double> dw(static_cast<std::size_t>(d));
        std::vector<double> window(static_cast<std::size_t>((window_end - it) * d));
        Eigen::VectorXd D(d);
        for (std::size_t p = begin; p < end; ++p) {
            double x = spec.x0;
            y[0] = x * ell_suffix[0];
            for (std::size_t i = 0; i < steps; ++i) {
                detail::draw_increment(plan, rng, p, false, i, dw.data());
                if (i >= it && i < window_end) {
                    std::copy(dw.begin(), dw.end(), window.begin() + static_cast<std::ptrdiff_t>((i - it) * d));
                }
                x = detail::advance(plan, i, x, dw.data());
                if (!std::isfinite(x)) {
                    throw Error(ErrorCode::NonFiniteState, "wealth overflow in spike test");
                }
                y[i + 1] = x * ell_suffix[i + 1];
            }
            const double yT = y[steps];
            const double z = yT - y[it];
            y_at_t[p] = y[it];
            for (std::size_t j = 0; j < ne; ++j) {
                D.setZero();
                for (std::size_t i = it; i < ie[j]; ++i) {
                    const double carry = spec.mode == PerturbationMode::Frozen ? frozen_suffix[i + 1] : yT / y[i + 1];
                    for (int c = 0; c < d; ++c) {
                        const double src = plan.theta_mid[i](c) * plan.dt[i] + window[(i - it) * d + static_cast<std::size_t>(c)];
                        D(c) += src * carry;
                    }
                }
                for (std::size_t k = 0; k < nv; ++k) {
                    const double delta = vs[k].dot(D);
                    diffs(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k * ne + j)) =
                        utility_increment(utility, z, delta);
                }
            }
        }
    });

    SpikeTestResult out;
    out.t = t;
    out.mode = spec.mode;
    out.pass = true;
    std::vector<bool> eps_ok(ne, true);
    for (std::size_t k = 0; k < nv; ++k) {
        SpikeResult r;
        r.v = vs[k];
        for (std::size_t j = 0; j < ne; ++j) {
            const auto col = static_cast<Eigen::Index>(k * ne + j);
            const MeanStd ms = mean_std(spec.n_paths, [&](std::size_t p) { return diffs(static_cast<Eigen::Index>(p), col); });
            SlopeEstimate s;
            s.epsilon = eps[j];
            s.slope = ms.mean / eps[j];
            s.std_error = ms.std_error / eps[j];
            s.predicted = std::numeric_limits<double>::quiet_NaN();
            if (ev != nullptr && spec.mode == PerturbationMode::Frozen) {
                const std::size_t stride = std::max<std::size_t>(1, spec.n_paths / 256);
                double acc = 0.0;
                std::size_t cnt = 0;
                for (std::size_t p = 0; p < spec.n_paths; p += (t == 0.0 ? spec.n_paths : stride)) {
                    acc += predicted_slope(*ev, market, mm, utility, t, eps[j], y_at_t[p], vs[k]);
                    ++cnt;
                }
                s.predicted = acc / static_cast<double>(cnt);
            }
            if (s.slope < -spec.threshold * s.std_error) {
                eps_ok[j] = false;
            }
            r.ladder.push_back(s);
        }
        const SlopeEstimate& last = r.ladder.back();
        r.non_negative = last.slope >= -spec.threshold * last.std_error;
        r.trend_non_decreasing = true;
        for (std::size_t j = 1; j < ne; ++j) {
            const auto& a = r.ladder[j - 1];
            const auto& b = r.ladder[j];
            if (b.slope < a.slope - spec.threshold * std::hypot(a.std_error, b.std_error)) {
                r.trend_non_decreasing = false;
            }
        }
        out.pass = out.pass && r.non_negative;
        out.per_v.push_back(std::move(r));
    }
    for (std::size_t j = ne; j-- > 0;) {
        if (!eps_ok[j]) {
            break;
        }
        out.delta = eps[j];
    }
    return out;
}

AdjointLimitResult adjoint_limit_test(const AdjointEvaluator& ev, const MarketModel& market,
                                      const FeedbackControl& control, double t, const std::vector<double>& s_ladder,
                                      const AdjointTestOptions& opts)
{
    check_control(market, control);
    const double T = market.horizon;
    if (!(t >= 0.0 && t < T)) {
        throw Error(ErrorCode::RangeError, "adjoint test needs 0 <= t < T");
    }
    if (s_ladder.empty()) {
        throw Error(ErrorCode::RangeError, "empty s ladder");
    }
    for (std::size_t k = 0; k < s_ladder.size(); ++k) {
        if (!(s_ladder[k] >= t && s_ladder[k] <= T)) {
            throw Error(ErrorCode::RangeError, "ladder point outside [t, T]");
        }
        if (k > 0 && !(s_ladder[k] < s_ladder[k - 1])) {
            throw Error(ErrorCode::RangeError, "s ladder must decrease toward t");
        }
    }
    if (opts.n_paths < 2) {
        throw Error(ErrorCode::RangeError, "adjoint test needs at least two paths");
    }

    const MomentModel mm(market, control);
    const double y_t = opts.y_t;
    const double x_t = y_t / std::exp(mm.ell_to_horizon(t));
    const auto plan = detail::make_plan(market, control, simulation_times(t, T, opts.n_steps, s_ladder),
                                        Scheme::ExactLog, Measure::Physical);
    const auto& times = plan.times;
    const std::size_t steps = times.size() - 1;
    std::vector<double> ell_suffix(times.size());
    std::vector<double> theta_norm(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        ell_suffix[i] = std::exp(mm.ell_to_horizon(times[i]));
        theta_norm[i] = market.theta(times[i]).norm();
    }
    std::vector<std::size_t> idx;
    for (double s : s_ladder) {
        idx.push_back(index_of(times, s));
    }
    const std::size_t nl = s_ladder.size();
    Eigen::MatrixXd coef(static_cast<Eigen::Index>(opts.n_paths), static_cast<Eigen::Index>(nl));
    std::vector<double> abs_int(opts.n_paths);
    const NormalStream rng(opts.seed, 2);

    detail::parallel_blocks(opts.n_paths, opts.workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> y(times.size());
        std::vector<double> dw(static_cast<std::size_t>(plan.dim));
        for (std::size_t p = begin; p < end; ++p) {
            double x = x_t;
            y[0] = y_t;
            for (std::size_t i = 0; i < steps; ++i) {
                detail::draw_increment(plan, rng, p, false, i, dw.data());
                x = detail::advance(plan, i, x, dw.data());
                y[i + 1] = x * ell_suffix[i + 1];
            }
            for (std::size_t k = 0; k < nl; ++k) {
                coef(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(k)) =
                    adjoint_coefficient(ev, t, times[idx[k]], y_t, y[idx[k]]);
            }
            double acc = 0.0;
            double prev = std::abs(adjoint_coefficient(ev, t, times[0], y_t, y[0])) * theta_norm[0];
            for (std::size_t i = 1; i < times.size(); ++i) {
                const double cur = std::abs(adjoint_coefficient(ev, t, times[i], y_t, y[i])) * theta_norm[i];
                acc += 0.5 * (prev + cur) * (times[i] - times[i - 1]);
                prev = cur;
            }
            abs_int[p] = acc;
        }
    });

    AdjointLimitResult out;
    out.t = t;
    out.y_t = y_t;
    out.diagonal_zero = adjoint_lambda(ev, t, t, y_t, y_t).isZero(0.0) && adjoint_coefficient(ev, t, t, y_t, y_t) == 0.0;
    out.matches_analytic = true;
    for (std::size_t k = 0; k < nl; ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        const MeanStd ms = mean_std(opts.n_paths, [&](std::size_t p) { return coef(static_cast<Eigen::Index>(p), col); });
        AdjointEstimate e;
        e.s = s_ladder[k];
        e.mc = ms.mean;
        e.std_error = ms.std_error;
        e.analytic = expected_adjoint_coefficient(ev, market, control, t, s_ladder[k], y_t);
        if (std::abs(e.mc - e.analytic) > opts.threshold * e.std_error + 1e-12 * (1.0 + std::abs(e.analytic))) {
            out.matches_analytic = false;
        }
        if (e.s == t && e.mc != 0.0) {
            out.diagonal_zero = false;
        }
        out.ladder.push_back(e);
    }
    out.decreasing = true;
    for (std::size_t k = 1; k < nl; ++k) {
        const auto& a = out.ladder[k - 1];
        const auto& b = out.ladder[k];
        if (std::abs(b.mc) > std::abs(a.mc) + opts.threshold * std::hypot(a.std_error, b.std_error)) {
            out.decreasing = false;
        }
    }
    double sum = 0.0;
    for (double v : abs_int) {
        sum += v;
    }
    out.integral_abs = sum / static_cast<double>(opts.n_paths);
    out.pass = out.diagonal_zero && out.matches_analytic && out.decreasing && std::isfinite(out.integral_abs);
    return out;
}

SecondOrderResult second_order_sign_test(const MarketModel& market, const FeedbackControl& control, Utility utility,
                                         double t, const AdjointTestOptions& opts)
{
    check_control(market, control);
    const double T = market.horizon;
    if (!(t >= 0.0 && t < T)) {
        throw Error(ErrorCode::RangeError, "second-order test needs 0 <= t < T");
    }
    SecondOrderResult out;
    if (utility == Utility::Quadratic) {
        out.estimate = 1.0;
        out.pass = true;
        out.method = "constant";
        return out;
    }
    if (utility == Utility::NegativePart) {
        throw Error(ErrorCode::UtilityMismatch, "x^- has no second derivative at the kink");
    }
    if (opts.n_paths < 2) {
        throw Error(ErrorCode::RangeError, "second-order test needs at least two paths");
    }

    const MomentModel mm(market, control);
    const double y_t = opts.y_t;
    const auto plan = detail::make_plan(market, control, simulation_times(t, T, opts.n_steps), Scheme::ExactLog,
                                        Measure::Physical);
    const std::size_t steps = plan.times.size() - 1;
    const double x_t = y_t / std::exp(mm.ell_to_horizon(t));
    std::vector<double> val(opts.n_paths);
    const NormalStream rng(opts.seed, 3);
    detail::parallel_blocks(opts.n_paths, opts.workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> dw(static_cast<std::size_t>(plan.dim));
        for (std::size_t p = begin; p < end; ++p) {
            double x = x_t;
            for (std::size_t i = 0; i < steps; ++i) {
                detail::draw_increment(plan, rng, p, false, i, dw.data());
                x = detail::advance(plan, i, x, dw.data());
            }
            val[p] = utility_second_derivative(utility, x - y_t);
        }
    });
    const MeanStd ms = mean_std(opts.n_paths, [&](std::size_t p) { return val[p]; });
    out.estimate = ms.mean;
    out.std_error = ms.std_error;
    if (utility == Utility::Quartic) {
        out.method = "monte_carlo";
        out.pass = out.estimate >= 0.0;
        return out;
    }
    for (std::size_t i = market.r.locate(t); i < market.grid.size(); ++i) {
        const double res = market.r[i] - market.mu[i] + control.gain[i].dot(market.theta[i]);
        out.residual_sup = std::max(out.residual_sup, std::abs(res));
    }
    out.method = "martingale_substitute";
    out.pass = out.residual_sup <= 1e-6 && std::abs(out.estimate) <= opts.threshold * out.std_error + 1e-14;
    return out;
}

NegativePartResult negative_part_condition(const MarketModel& market, const FeedbackControl& control, double x0,
                                           double t, std::size_t n_paths, std::uint64_t seed, std::size_t n_steps,
                                           unsigned workers)
{
    check_control(market, control);
    const double T = market.horizon;
    if (!(t >= 0.0 && t < T)) {
        throw Error(ErrorCode::RangeError, "x^- condition needs 0 <= t < T");
    }
    if (n_paths < 2) {
        throw Error(ErrorCode::RangeError, "x^- condition needs at least two paths");
    }
    NegativePartResult out;
    out.n_paths = n_paths;
    const double excess = integrate(market.mu, t, T) - integrate(market.r, t, T);
    const double factor = std::expm1(excess);

    bool zero_gain = true;
    for (const auto& k : control.gain.values()) {
        zero_gain = zero_gain && k.isZero(0.0);
    }
    if (zero_gain) {
        const double x_t = x0 * std::exp(integrate(market.r, 0.0, t));
        out.rhs = x_t * factor;
        bool equal = true;
        const std::size_t first = market.r.locate(t);
        for (std::size_t i = first; i < market.grid.size(); ++i) {
            equal = equal && std::abs(market.mu[i] - market.r[i]) <= 1e-14;
        }
        if (equal) {
            out.analytic = TriState::Equality;
        } else if (out.rhs <= 0.0) {
            out.analytic = TriState::Holds;
        } else {
            out.analytic = TriState::Fails;
        }
    }

    SimulationConfig cfg;
    cfg.n_paths = n_paths;
    cfg.n_steps = n_steps;
    cfg.seed = seed;
    cfg.measure = Measure::RiskNeutral;
    cfg.retain_increments = false;
    cfg.workers = workers;
    if (t > 0.0) {
        cfg.extra_times = {t};
    }
    const PathEnsemble ens = simulate_wealth(market, control, x0, cfg);
    const std::size_t it = index_of(ens.times, t);
    const double discount = std::exp(-integrate(market.r, t, T));
    std::size_t violations = 0;
    for (std::size_t p = 0; p < n_paths; ++p) {
        const auto row = static_cast<Eigen::Index>(p);
        const double xt = ens.wealth(row, static_cast<Eigen::Index>(it));
        const double lhs = ens.wealth(row, ens.wealth.cols() - 1) * discount - xt;
        const double rhs = xt * factor;
        if (lhs < rhs - 1e-12 * std::max(1.0, std::abs(xt))) {
            ++violations;
        }
    }
    out.empirical_violation_fraction = static_cast<double>(violations) / static_cast<double>(n_paths);
    return out;
}

EquilibriumReport run_verification(const MarketModel& market, Utility utility, const VerifyOptions& opts,
                                   const CoefficientCurves* given)
{
    EquilibriumReport rep;
    rep.utility = utility;
    rep.mode = opts.mode;
    rep.seed = opts.seed;
    rep.x0 = opts.x0;
    const double T = market.horizon;

    if (utility == Utility::NegativePart) {
        const FeedbackControl zero = zero_control(market, utility);
        rep.negative_part = negative_part_condition(market, zero, opts.x0, opts.t, opts.negative_part_paths, opts.seed,
                                                    opts.n_steps, opts.workers);
        const auto& np = *rep.negative_part;
        if (np.analytic == TriState::Fails) {
            rep.reasons.emplace_back("NEGATIVE_PART_FAILS");
        }
        const double expected = np.analytic == TriState::Fails ? 1.0 : 0.0;
        if (np.empirical_violation_fraction != expected) {
            rep.reasons.emplace_back("NEGATIVE_PART_EMPIRICAL_MISMATCH");
        }
        rep.pass = rep.reasons.empty();
        return rep;
    }

    const CoefficientCurves curves = given != nullptr ? *given : solve_coeffs(market, utility, opts.solver);
    if (curves.utility != utility) {
        throw Error(ErrorCode::UtilityMismatch, "coefficient curves were solved for another utility");
    }
    rep.residual = equilibrium_residual(curves, market);
    rep.residual_sup = residual_verdict(*rep.residual).sup;
    if (rep.residual_sup > opts.residual_tol) {
        rep.reasons.emplace_back("RESIDUAL_EXCEEDS_TOL");
    }
    rep.consistency_sup = residual_verdict(curves.consistency).sup;
    if (rep.consistency_sup > opts.consistency_tol) {
        rep.reasons.emplace_back("CONSISTENCY_EXCEEDS_TOL");
    }
    rep.alpha = curves.alpha;
    rep.lambda = curves.lambda;
    rep.terminal = curves.terminal;

    const FeedbackControl control = feedback_control(curves, market);
    const AdjointEvaluator ev = make_adjoint_evaluator(curves, market);

    PerturbationSpec ps;
    ps.t = opts.t;
    ps.vs = spike_dictionary(market.dim);
    for (const auto& v : opts.extra_v) {
        ps.vs.push_back(v);
    }
    ps.epsilons = opts.epsilons;
    ps.n_paths = opts.spike_paths;
    ps.n_steps = opts.n_steps;
    ps.seed = opts.seed;
    ps.x0 = opts.x0;
    ps.mode = opts.mode;
    ps.threshold = opts.threshold;
    ps.workers = opts.workers;
    rep.spike = spike_perturbation_test(market, control, utility, ps, &ev);
    if (!rep.spike->pass) {
        rep.reasons.emplace_back("SPIKE_SLOPE_NEGATIVE");
    }

    AdjointTestOptions ao;
    ao.n_paths = opts.adjoint_paths;
    ao.n_steps = opts.n_steps;
    ao.seed = opts.seed;
    ao.y_t = opts.x0 * std::exp(integrate(control.scale_exponent, opts.t, T));
    ao.threshold = opts.threshold;
    ao.workers = opts.workers;
    std::vector<double> ladder;
    for (double off : opts.adjoint_offsets) {
        const double s = opts.t + off * (T - opts.t);
        if (ladder.empty() || s < ladder.back()) {
            ladder.push_back(s);
        }
    }
    rep.adjoint_limits = adjoint_limit_test(ev, market, control, opts.t, ladder, ao);
    if (!rep.adjoint_limits->pass) {
        rep.reasons.emplace_back("ADJOINT_LIMIT_NONZERO");
    }

    AdjointTestOptions so = ao;
    so.n_paths = opts.second_order_paths;
    rep.second_order = second_order_sign_test(market, control, utility, opts.t, so);
    if (!rep.second_order->pass) {
        rep.reasons.emplace_back("SECOND_ORDER_SIGN");
    }

    bool analytic_ok = true;
    for (std::size_t j = 0; j < opts.target_times; ++j) {
        const double tj = T * static_cast<double>(j) / static_cast<double>(opts.target_times);
        const TargetError e = analytic_target_error(market, control, tj);
        analytic_ok = analytic_ok && std::abs(e.analytic) <= opts.target_tol;
        rep.target_errors.push_back(e);
    }
    if (!analytic_ok) {
        rep.reasons.emplace_back("TARGET_ANALYTIC");
    }
    bool mc_ok = true;
    for (double tm : opts.target_mc_times) {
        SimulationConfig cfg;
        cfg.n_paths = opts.target_outer;
        cfg.n_steps = opts.n_steps;
        cfg.seed = opts.seed;
        cfg.stream = 4;
        cfg.workers = opts.workers;
        const TargetError e = conditional_target_error(market, control, opts.x0, tm, cfg, opts.target_inner);
        mc_ok = mc_ok && std::abs(e.estimate) <= opts.threshold * e.std_error + 1e-14;
        rep.target_errors.push_back(e);
    }
    if (!mc_ok) {
        rep.reasons.emplace_back("TARGET_MC");
    }
    rep.pass = rep.reasons.empty();
    return rep;
}

} // namespace eqport
