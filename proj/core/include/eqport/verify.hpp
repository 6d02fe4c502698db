#pragma once

#include "eqport/coeffs.hpp"
#include "eqport/market.hpp"
#include "eqport/sim.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace eqport {

/// Frozen: the unperturbed control process is kept after the spike (open-loop reading).
/// Feedback: the feedback gain is applied to the perturbed state after the spike.
enum class PerturbationMode { Frozen, Feedback };

std::string_view mode_name(PerturbationMode m) noexcept;
PerturbationMode parse_mode(std::string_view name);

struct PerturbationSpec {
    double t = 0.0;
    /// Spike values in the transformed (Y) units; empty means the dictionary {+-e_i, +-1}.
    std::vector<Eigen::VectorXd> vs;
    std::vector<double> epsilons{0.1, 0.05, 0.025};
    std::size_t n_paths = 100000;
    std::size_t n_steps = 64;
    std::uint64_t seed = 0;
    /// Wealth at time 0; states at t are sampled from the unperturbed law.
    double x0 = 100.0;
    PerturbationMode mode = PerturbationMode::Frozen;
    double threshold = 3.0;
    unsigned workers = 0;
};

/// {+e_1, -e_1, ..., +1, -1} without duplicates.
std::vector<Eigen::VectorXd> spike_dictionary(int dim);

struct SlopeEstimate {
    double epsilon = 0.0;
    double slope = 0.0;
    double std_error = 0.0;
    /// First plus second order prediction from the adjoint closed forms; NaN if unavailable.
    double predicted = 0.0;
};

struct SpikeResult {
    Eigen::VectorXd v;
    /// Ordered as the epsilon ladder (decreasing).
    std::vector<SlopeEstimate> ladder;
    bool non_negative = false;
    bool trend_non_decreasing = false;
};

struct SpikeTestResult {
    double t = 0.0;
    PerturbationMode mode = PerturbationMode::Frozen;
    std::vector<SpikeResult> per_v;
    bool pass = false;
    /// Largest tested epsilon from which every smaller epsilon passes for every v (0 if none).
    double delta = 0.0;
};

/// Paired-path estimate of [J(u^{t,eps,v}) - J(u*)]/eps in the transformed problem J = E_t[h(Y_T - Y_t)].
/// The adjoint evaluator, when given, supplies the analytic prediction.
SpikeTestResult spike_perturbation_test(const MarketModel& market, const FeedbackControl& control, Utility utility,
                                        const PerturbationSpec& spec, const AdjointEvaluator* ev = nullptr);

struct AdjointEstimate {
    double s = 0.0;
    /// Scalar c with E_t[Lambda_s^t] = c theta_s.
    double mc = 0.0;
    double std_error = 0.0;
    double analytic = 0.0;
};

struct AdjointLimitResult {
    double t = 0.0;
    double y_t = 0.0;
    std::vector<AdjointEstimate> ladder;
    bool diagonal_zero = false;
    bool matches_analytic = false;
    bool decreasing = false;
    /// Estimate of E_t int_t^T |Lambda_s^t| ds.
    double integral_abs = 0.0;
    bool pass = false;
};

/// Closed-form E_t[Lambda_s^t] coefficient given Y_t = y_t under the control's linear feedback.
double expected_adjoint_coefficient(const AdjointEvaluator& ev, const MarketModel& market,
                                    const FeedbackControl& control, double t, double s, double y_t);

struct AdjointTestOptions {
    std::size_t n_paths = 20000;
    std::size_t n_steps = 64;
    std::uint64_t seed = 0;
    double y_t = 1.0;
    double threshold = 3.0;
    unsigned workers = 0;
};

AdjointLimitResult adjoint_limit_test(const AdjointEvaluator& ev, const MarketModel& market,
                                      const FeedbackControl& control, double t, const std::vector<double>& s_ladder,
                                      const AdjointTestOptions& opts);

struct SecondOrderResult {
    double estimate = 0.0;
    double std_error = 0.0;
    /// sup |r - mu + k.theta| on [t, T]; used for the cubic substitute condition.
    double residual_sup = 0.0;
    bool pass = false;
    std::string method;
};

SecondOrderResult second_order_sign_test(const MarketModel& market, const FeedbackControl& control, Utility utility,
                                         double t, const AdjointTestOptions& opts);

enum class TriState { Equality, Holds, Fails, NotApplicable };

std::string_view tri_state_name(TriState s) noexcept;

struct NegativePartResult {
    TriState analytic = TriState::NotApplicable;
    /// X_t (exp(int_t^T mu - r) - 1) for the deterministic zero-control state.
    double rhs = 0.0;
    double empirical_violation_fraction = 0.0;
    std::size_t n_paths = 0;
};

NegativePartResult negative_part_condition(const MarketModel& market, const FeedbackControl& control, double x0,
                                           double t, std::size_t n_paths, std::uint64_t seed,
                                           std::size_t n_steps = 64, unsigned workers = 0);

struct VerifyOptions {
    double x0 = 100.0;
    double t = 0.0;
    std::vector<double> epsilons{0.1, 0.05, 0.025};
    std::vector<Eigen::VectorXd> extra_v;
    std::size_t spike_paths = 100000;
    std::size_t n_steps = 64;
    std::uint64_t seed = 1;
    PerturbationMode mode = PerturbationMode::Frozen;
    double residual_tol = 1e-6;
    double consistency_tol = 1e-9;
    double target_tol = 1e-9;
    double threshold = 3.0;
    std::size_t adjoint_paths = 20000;
    /// Offsets s - t of the adjoint ladder as fractions of T - t (decreasing).
    std::vector<double> adjoint_offsets{0.4, 0.2, 0.1, 0.05, 0.025, 0.0};
    std::size_t second_order_paths = 20000;
    std::size_t target_times = 16;
    std::vector<double> target_mc_times{0.0};
    std::size_t target_outer = 200;
    std::size_t target_inner = 200;
    std::size_t negative_part_paths = 10000;
    unsigned workers = 0;
    PowerSolverOptions solver;
};

struct EquilibriumReport {
    Utility utility = Utility::Quadratic;
    PerturbationMode mode = PerturbationMode::Frozen;
    std::uint64_t seed = 0;
    double x0 = 0.0;
    std::optional<ScalarCurve> residual;
    double residual_sup = 0.0;
    double consistency_sup = 0.0;
    std::optional<VectorCurve> alpha;
    std::optional<ScalarCurve> lambda;
    std::optional<TerminalLimit> terminal;
    std::optional<SpikeTestResult> spike;
    std::optional<AdjointLimitResult> adjoint_limits;
    std::optional<SecondOrderResult> second_order;
    std::vector<TargetError> target_errors;
    std::optional<NegativePartResult> negative_part;
    bool pass = false;
    /// Machine-readable codes, one per failed check.
    std::vector<std::string> reasons;
};

/// Solves (or takes) the coefficients, builds the feedback control and runs every check for the utility.
EquilibriumReport run_verification(const MarketModel& market, Utility utility, const VerifyOptions& opts,
                                   const CoefficientCurves* curves = nullptr);

std::string report_to_json(const EquilibriumReport& report, int indent = 2);

} // namespace eqport
