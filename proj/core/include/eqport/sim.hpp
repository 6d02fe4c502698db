#pragma once

#include "eqport/coeffs.hpp"
#include "eqport/market.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace eqport {

enum class Scheme { ExactLog, EulerMaruyama };
enum class Measure { Physical, RiskNeutral };

std::string_view scheme_name(Scheme s) noexcept;
Scheme parse_scheme(std::string_view name);
std::string_view measure_name(Measure m) noexcept;
Measure parse_measure(std::string_view name);

struct SimulationConfig {
    std::size_t n_paths = 1000;
    std::size_t n_steps = 64;
    std::uint64_t seed = 0;
    Scheme scheme = Scheme::ExactLog;
    Measure measure = Measure::Physical;
    bool antithetic = false;
    bool retain_increments = true;
    /// Worker threads; 0 picks the hardware concurrency.
    unsigned workers = 0;
    /// Simulation starts at this time with wealth x0.
    double start_time = 0.0;
    /// Simulation ends here; negative means the horizon.
    double end_time = -1.0;
    /// Times added to the uniform simulation grid (inside [start_time, T]).
    std::vector<double> extra_times;
    /// Separates independent sub-ensembles sharing one seed.
    std::uint32_t stream = 0;
};

struct PathEnsemble {
    std::vector<double> times;
    /// n_paths x (n_steps + 1).
    Eigen::MatrixXd wealth;
    /// n_paths x (n_steps * d), step-major; empty unless retained.
    Eigen::MatrixXd brownian_increments;
    Eigen::VectorXd girsanov_weight;
    Measure measure = Measure::Physical;
    Scheme scheme = Scheme::ExactLog;
    int dim = 1;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t n_paths() const { return static_cast<std::size_t>(wealth.rows()); }
    [[nodiscard]] std::size_t n_steps() const { return times.size() - 1; }
    [[nodiscard]] bool has_increments() const { return brownian_increments.size() > 0; }
    [[nodiscard]] Eigen::Ref<const Eigen::VectorXd> increment(std::size_t path, std::size_t step) const;
};

/// Uniform grid of n_steps on [start, T] merged with the extra times.
std::vector<double> simulation_times(double start, double horizon, std::size_t n_steps,
                                     const std::vector<double>& extra = {});

/// The control gain must live on the market grid.
PathEnsemble simulate_wealth(const MarketModel& market, const FeedbackControl& control, double x0,
                             const SimulationConfig& cfg);

/// Per-path stochastic exponential E(-int theta dW) at the final time; identically 1 under the risk-neutral measure.
Eigen::VectorXd girsanov_weights(const PathEnsemble& ensemble, const MarketModel& market);

/// Multiplier E_t[X_T]/X_t for linear feedback: exp(int_t^T r + k.theta ds).
double analytic_mean_multiplier(const MarketModel& market, const FeedbackControl& control, double t);

struct TargetError {
    double t = 0.0;
    /// E_t[X_T]/X_t - exp(int_t^T mu) from the closed form.
    double analytic = 0.0;
    /// Mean over outer states of the signed relative error of the restarted inner estimate.
    double estimate = 0.0;
    double std_error = 0.0;
    /// Mean absolute relative error; biased upwards by inner noise, reported as a diagnostic.
    double mean_abs = 0.0;
    std::size_t n_outer = 0;
    std::size_t n_inner = 0;
};

/// Restarted-path estimate of the moving-target error at time t.
/// cfg.n_paths is the outer ensemble size; each outer state is restarted with n_inner paths.
TargetError conditional_target_error(const MarketModel& market, const FeedbackControl& control, double x0, double t,
                                     const SimulationConfig& cfg, std::size_t n_inner);

/// Closed-form part only (no simulation).
TargetError analytic_target_error(const MarketModel& market, const FeedbackControl& control, double t);

void write_ensemble_csv(std::ostream& os, const PathEnsemble& ensemble);

/// mean, stderr and quantiles of X_T plus the mean Girsanov weight.
std::string ensemble_summary_json(const PathEnsemble& ensemble, int indent = 2);

} // namespace eqport
