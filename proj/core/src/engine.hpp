#pragma once

#include "eqport/rng.hpp"
#include "eqport/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace eqport::detail {

/// Deterministic per-step coefficients of the linear-feedback wealth dynamics.
struct StepPlan {
    std::vector<double> times;
    int dim = 1;
    Scheme scheme = Scheme::ExactLog;
    Measure measure = Measure::Physical;
    std::vector<double> dt;
    std::vector<double> sqrt_dt;
    /// ExactLog: deterministic part of the log increment.
    std::vector<double> log_drift;
    /// EulerMaruyama: drift rate at the left point.
    std::vector<double> euler_rate;
    /// Diffusion loading (midpoint for ExactLog, left point for Euler).
    std::vector<Eigen::VectorXd> loading;
    std::vector<Eigen::VectorXd> theta_mid;
    std::vector<double> theta_sq_dt;
    /// int r over the step.
    std::vector<double> r_int;
};

StepPlan make_plan(const MarketModel& market, const FeedbackControl& control, std::vector<double> times, Scheme scheme,
                   Measure measure);

/// Brownian increments of one step, written to dw (size dim).
inline void draw_increment(const StepPlan& plan, const NormalStream& rng, std::uint64_t path, bool antithetic,
                           std::size_t step, double* dw)
{
    const std::uint64_t counter = antithetic ? path / 2 : path;
    rng.fill(counter, static_cast<std::uint32_t>(step), plan.dim, dw);
    const double sign = antithetic && (path % 2 == 1) ? -1.0 : 1.0;
    for (int j = 0; j < plan.dim; ++j) {
        dw[j] *= sign * plan.sqrt_dt[step];
    }
}

inline double dot(const Eigen::VectorXd& a, const double* b)
{
    double s = 0.0;
    for (Eigen::Index j = 0; j < a.size(); ++j) {
        s += a(j) * b[j];
    }
    return s;
}

/// Wealth after one step.
inline double advance(const StepPlan& plan, std::size_t step, double x, const double* dw)
{
    const double kdw = dot(plan.loading[step], dw);
    if (plan.scheme == Scheme::ExactLog) {
        return x * std::exp(plan.log_drift[step] + kdw);
    }
    return x * (1.0 + plan.euler_rate[step] * plan.dt[step] + kdw);
}

/// Log of the stochastic exponential over one step.
inline double log_weight_step(const StepPlan& plan, std::size_t step, const double* dw)
{
    return -dot(plan.theta_mid[step], dw) - 0.5 * plan.theta_sq_dt[step];
}

inline unsigned resolve_workers(unsigned requested, std::size_t work)
{
    unsigned w = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
    return static_cast<unsigned>(std::clamp<std::size_t>(work, 1, w));
}

/// Runs fn(begin, end) on contiguous blocks of [0, n) across worker threads.
template<class Fn>
void parallel_blocks(std::size_t n, unsigned workers, Fn&& fn)
{
    const unsigned w = resolve_workers(workers, n);
    if (w <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(w);
    const std::size_t chunk = (n + w - 1) / w;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned i = 0; i < w; ++i) {
        const std::size_t begin = std::min(n, i * chunk);
        const std::size_t end = std::min(n, begin + chunk);
        pool.emplace_back([&, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace eqport::detail
