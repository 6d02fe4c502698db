#include "eqport/sim.hpp"

#include "engine.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>

namespace eqport {

std::string_view scheme_name(Scheme s) noexcept
{
    return s == Scheme::ExactLog ? "exact" : "euler";
}

Scheme parse_scheme(std::string_view name)
{
    if (name == "exact" || name == "exact_log") {
        return Scheme::ExactLog;
    }
    if (name == "euler" || name == "euler_maruyama") {
        return Scheme::EulerMaruyama;
    }
    throw Error(ErrorCode::ParseError, "unknown scheme '" + std::string(name) + "'");
}

std::string_view measure_name(Measure m) noexcept
{
    return m == Measure::Physical ? "physical" : "risk_neutral";
}

Measure parse_measure(std::string_view name)
{
    if (name == "physical" || name == "P") {
        return Measure::Physical;
    }
    if (name == "risk_neutral" || name == "Q") {
        return Measure::RiskNeutral;
    }
    throw Error(ErrorCode::ParseError, "unknown measure '" + std::string(name) + "'");
}

Eigen::Ref<const Eigen::VectorXd> PathEnsemble::increment(std::size_t path, std::size_t step) const
{
    if (!has_increments()) {
        throw Error(ErrorCode::MissingIncrements, "ensemble was simulated without retained increments");
    }
    return brownian_increments.row(static_cast<Eigen::Index>(path))
        .segment(static_cast<Eigen::Index>(step) * dim, dim)
        .transpose();
}

std::vector<double> simulation_times(double start, double horizon, std::size_t n_steps, const std::vector<double>& extra)
{
    if (!(start >= 0.0 && start < horizon)) {
        throw Error(ErrorCode::RangeError, "simulation window must satisfy 0 <= start < end");
    }
    if (n_steps == 0) {
        throw Error(ErrorCode::GridError, "n_steps must be at least 1");
    }
    std::vector<double> g(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i) {
        g[i] = start + (horizon - start) * static_cast<double>(i) / static_cast<double>(n_steps);
    }
    g.back() = horizon;
    const double tol = 1e-12 * std::max(1.0, horizon);
    for (double s : extra) {
        if (!(s >= start && s <= horizon)) {
            throw Error(ErrorCode::RangeError, "extra time " + std::to_string(s) + " outside the simulation window");
        }
        auto it = std::lower_bound(g.begin(), g.end(), s);
        if (it != g.end() && *it - s <= tol) {
            if (it != g.begin() && it + 1 != g.end()) {
                *it = s;
            }
        } else if (it != g.begin() && s - *(it - 1) <= tol) {
            if (it - 1 != g.begin()) {
                *(it - 1) = s;
            }
        } else {
            g.insert(it, s);
        }
    }
    return g;
}

namespace detail {

StepPlan make_plan(const MarketModel& market, const FeedbackControl& control, std::vector<double> times, Scheme scheme,
                   Measure measure)
{
    if (!same_grid(control.gain.grid(), market.grid)) {
        throw Error(ErrorCode::GridError, "control gain is not on the market grid");
    }
    if (control.gain[0].size() != market.dim) {
        throw Error(ErrorCode::DimensionMismatch, "control gain dimension differs from the market");
    }
    const std::size_t n = market.grid.size();
    std::vector<double> drift(n);
    for (std::size_t i = 0; i < n; ++i) {
        drift[i] = market.r[i] + control.gain[i].dot(market.theta[i]);
    }
    const RunningIntegral r_int(market.r);
    const RunningIntegral drift_int(ScalarCurve(market.grid, std::move(drift)));

    StepPlan p;
    p.times = std::move(times);
    p.dim = market.dim;
    p.scheme = scheme;
    p.measure = measure;
    const std::size_t steps = p.times.size() - 1;
    p.dt.resize(steps);
    p.sqrt_dt.resize(steps);
    p.log_drift.resize(steps);
    p.euler_rate.resize(steps);
    p.loading.resize(steps);
    p.theta_mid.resize(steps);
    p.theta_sq_dt.resize(steps);
    p.r_int.resize(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double a = p.times[i];
        const double b = p.times[i + 1];
        const double h = b - a;
        const double m = 0.5 * (a + b);
        p.dt[i] = h;
        p.sqrt_dt[i] = std::sqrt(h);
        p.r_int[i] = r_int.integral(a, b);
        p.theta_mid[i] = market.theta(m);
        p.theta_sq_dt[i] = p.theta_mid[i].squaredNorm() * h;
        if (scheme == Scheme::ExactLog) {
            p.loading[i] = control.gain(m);
            const double base = measure == Measure::Physical ? drift_int.integral(a, b) : p.r_int[i];
            p.log_drift[i] = base - 0.5 * p.loading[i].squaredNorm() * h;
        } else {
            p.loading[i] = control.gain(a);
            p.euler_rate[i] = market.r(a);
            if (measure == Measure::Physical) {
                p.euler_rate[i] += p.loading[i].dot(market.theta(a));
            }
        }
    }
    return p;
}

} // namespace detail

namespace {

void check_config(const SimulationConfig& cfg)
{
    if (cfg.n_paths < 2) {
        throw Error(ErrorCode::RangeError, "n_paths must be at least 2");
    }
    if (cfg.n_steps < 1) {
        throw Error(ErrorCode::RangeError, "n_steps must be at least 1");
    }
}

} // namespace

PathEnsemble simulate_wealth(const MarketModel& market, const FeedbackControl& control, double x0,
                             const SimulationConfig& cfg)
{
    check_config(cfg);
    if (!std::isfinite(x0)) {
        throw Error(ErrorCode::RangeError, "x0 must be finite");
    }
    const double end = cfg.end_time < 0.0 ? market.horizon : cfg.end_time;
    if (end > market.horizon) {
        throw Error(ErrorCode::RangeError, "simulation end beyond the horizon");
    }
    auto plan = detail::make_plan(market, control, simulation_times(cfg.start_time, end, cfg.n_steps, cfg.extra_times),
                                  cfg.scheme, cfg.measure);
    const std::size_t steps = plan.times.size() - 1;
    const int d = plan.dim;

    PathEnsemble ens;
    ens.times = plan.times;
    ens.measure = cfg.measure;
    ens.scheme = cfg.scheme;
    ens.dim = d;
    ens.seed = cfg.seed;
    const auto np = static_cast<Eigen::Index>(cfg.n_paths);
    ens.wealth.resize(np, static_cast<Eigen::Index>(steps + 1));
    if (cfg.retain_increments) {
        ens.brownian_increments.resize(np, static_cast<Eigen::Index>(steps) * d);
    }
    ens.girsanov_weight = Eigen::VectorXd::Ones(np);

    const NormalStream rng(cfg.seed, cfg.stream);
    detail::parallel_blocks(cfg.n_paths, cfg.workers, [&](std::size_t begin, std::size_t end_path) {
        std::vector<double> dw(static_cast<std::size_t>(d));
        for (std::size_t p = begin; p < end_path; ++p) {
            const auto row = static_cast<Eigen::Index>(p);
            double x = x0;
            double logw = 0.0;
            ens.wealth(row, 0) = x;
            for (std::size_t i = 0; i < steps; ++i) {
                detail::draw_increment(plan, rng, p, cfg.antithetic, i, dw.data());
                x = detail::advance(plan, i, x, dw.data());
                if (!std::isfinite(x)) {
                    throw Error(ErrorCode::NonFiniteState, "wealth overflow on path " + std::to_string(p)
                                                               + " at t=" + std::to_string(plan.times[i + 1]));
                }
                ens.wealth(row, static_cast<Eigen::Index>(i + 1)) = x;
                if (cfg.measure == Measure::Physical) {
                    logw += detail::log_weight_step(plan, i, dw.data());
                }
                if (cfg.retain_increments) {
                    for (int j = 0; j < d; ++j) {
                        ens.brownian_increments(row, static_cast<Eigen::Index>(i) * d + j) = dw[static_cast<std::size_t>(j)];
                    }
                }
            }
            ens.girsanov_weight(row) = std::exp(logw);
        }
    });
    return ens;
}

Eigen::VectorXd girsanov_weights(const PathEnsemble& ens, const MarketModel& market)
{
    if (ens.measure == Measure::RiskNeutral) {
        return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(ens.n_paths()));
    }
    if (!ens.has_increments()) {
        throw Error(ErrorCode::MissingIncrements, "Girsanov weights need the retained Brownian increments");
    }
    const std::size_t steps = ens.n_steps();
    std::vector<Eigen::VectorXd> theta_mid(steps);
    std::vector<double> half_sq(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double h = ens.times[i + 1] - ens.times[i];
        theta_mid[i] = market.theta(0.5 * (ens.times[i] + ens.times[i + 1]));
        half_sq[i] = 0.5 * theta_mid[i].squaredNorm() * h;
    }
    Eigen::VectorXd w(static_cast<Eigen::Index>(ens.n_paths()));
    for (std::size_t p = 0; p < ens.n_paths(); ++p) {
        double logw = 0.0;
        for (std::size_t i = 0; i < steps; ++i) {
            logw -= theta_mid[i].dot(ens.increment(p, i)) + half_sq[i];
        }
        w(static_cast<Eigen::Index>(p)) = std::exp(logw);
    }
    return w;
}

double analytic_mean_multiplier(const MarketModel& market, const FeedbackControl& control, double t)
{
    if (!same_grid(control.gain.grid(), market.grid)) {
        throw Error(ErrorCode::GridError, "control gain is not on the market grid");
    }
    std::vector<double> drift(market.grid.size());
    for (std::size_t i = 0; i < drift.size(); ++i) {
        drift[i] = market.r[i] + control.gain[i].dot(market.theta[i]);
    }
    return std::exp(integrate(ScalarCurve(market.grid, std::move(drift)), t, market.horizon));
}

TargetError analytic_target_error(const MarketModel& market, const FeedbackControl& control, double t)
{
    if (!(t >= 0.0 && t < market.horizon)) {
        throw Error(ErrorCode::RangeError, "target error needs 0 <= t < T");
    }
    TargetError e;
    e.t = t;
    e.analytic = analytic_mean_multiplier(market, control, t) - std::exp(integrate(market.mu, t, market.horizon));
    return e;
}

TargetError conditional_target_error(const MarketModel& market, const FeedbackControl& control, double x0, double t,
                                     const SimulationConfig& cfg, std::size_t n_inner)
{
    check_config(cfg);
    if (n_inner < 2) {
        throw Error(ErrorCode::RangeError, "n_inner must be at least 2");
    }
    TargetError e = analytic_target_error(market, control, t);
    const double T = market.horizon;
    const double target = std::exp(integrate(market.mu, t, T));

    std::vector<double> xt(cfg.n_paths, x0);
    if (t > 0.0) {
        SimulationConfig outer = cfg;
        outer.end_time = t;
        outer.measure = Measure::Physical;
        outer.retain_increments = false;
        outer.n_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.n_steps * t / T)));
        const PathEnsemble ens = simulate_wealth(market, control, x0, outer);
        for (std::size_t j = 0; j < cfg.n_paths; ++j) {
            xt[j] = ens.wealth(static_cast<Eigen::Index>(j), ens.wealth.cols() - 1);
        }
    }

    const std::size_t inner_steps =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.n_steps * (T - t) / T)));
    const auto plan = detail::make_plan(market, control, simulation_times(t, T, inner_steps), cfg.scheme,
                                        Measure::Physical);
    const std::size_t steps = plan.times.size() - 1;
    const NormalStream rng(cfg.seed, cfg.stream + 1);
    std::vector<double> rel(cfg.n_paths);
    detail::parallel_blocks(cfg.n_paths, cfg.workers, [&](std::size_t begin, std::size_t end) {
        std::vector<double> dw(static_cast<std::size_t>(plan.dim));
        for (std::size_t j = begin; j < end; ++j) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n_inner; ++i) {
                const std::uint64_t path = static_cast<std::uint64_t>(j) * n_inner + i;
                double x = xt[j];
                for (std::size_t k = 0; k < steps; ++k) {
                    detail::draw_increment(plan, rng, path, cfg.antithetic, k, dw.data());
                    x = detail::advance(plan, k, x, dw.data());
                }
                if (!std::isfinite(x)) {
                    throw Error(ErrorCode::NonFiniteState, "inner path overflow");
                }
                sum += x;
            }
            rel[j] = sum / static_cast<double>(n_inner) / (xt[j] * target) - 1.0;
        }
    });

    double mean = 0.0;
    double mean_abs = 0.0;
    for (double v : rel) {
        mean += v;
        mean_abs += std::abs(v);
    }
    const auto n = static_cast<double>(rel.size());
    mean /= n;
    mean_abs /= n;
    double var = 0.0;
    for (double v : rel) {
        var += (v - mean) * (v - mean);
    }
    var /= (n - 1.0);
    e.estimate = mean;
    e.std_error = std::sqrt(var / n);
    e.mean_abs = mean_abs;
    e.n_outer = cfg.n_paths;
    e.n_inner = n_inner;
    return e;
}

void write_ensemble_csv(std::ostream& os, const PathEnsemble& ens)
{
    const auto old_prec = os.precision();
    os << "path_id,step,time,wealth\n" << std::setprecision(17);
    for (std::size_t p = 0; p < ens.n_paths(); ++p) {
        for (std::size_t i = 0; i < ens.times.size(); ++i) {
            os << p << ',' << i << ',' << ens.times[i] << ','
               << ens.wealth(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) << '\n';
        }
    }
    os.precision(old_prec);
}

std::string ensemble_summary_json(const PathEnsemble& ens, int indent)
{
    const Eigen::VectorXd xT = ens.wealth.col(ens.wealth.cols() - 1);
    const auto n = static_cast<double>(xT.size());
    const double mean = xT.mean();
    const double var = (xT.array() - mean).square().sum() / (n - 1.0);
    std::vector<double> sorted(xT.data(), xT.data() + xT.size());
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double q) {
        const double pos = q * (n - 1.0);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    };
    const Eigen::VectorXd& w = ens.girsanov_weight;
    const double wmean = w.mean();
    const double wvar = (w.array() - wmean).square().sum() / (n - 1.0);

    nlohmann::json j;
    j["n_paths"] = ens.n_paths();
    j["n_steps"] = ens.n_steps();
    j["seed"] = ens.seed;
    j["scheme"] = scheme_name(ens.scheme);
    j["measure"] = measure_name(ens.measure);
    j["horizon"] = ens.times.back();
    j["terminal_wealth"] = {{"mean", mean},
                            {"stderr", std::sqrt(var / n)},
                            {"quantiles",
                             {{"0.05", quantile(0.05)},
                              {"0.25", quantile(0.25)},
                              {"0.5", quantile(0.5)},
                              {"0.75", quantile(0.75)},
                              {"0.95", quantile(0.95)}}}};
    j["girsanov_weight"] = {{"mean", wmean}, {"stderr", std::sqrt(wvar / n)}};
    return j.dump(indent);
}

} // namespace eqport
