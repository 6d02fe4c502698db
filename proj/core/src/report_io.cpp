#include "eqport/verify.hpp"

#include <json.hpp>

#include <cmath>

namespace eqport {

namespace {

using nlohmann::json;

json number(double v)
{
    if (!std::isfinite(v)) {
        return nullptr;
    }
    return v;
}

json vector_json(const Eigen::VectorXd& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(number(v(i)));
    }
    return a;
}

json spike_json(const SpikeTestResult& s)
{
    json per_v = json::array();
    for (const auto& r : s.per_v) {
        json ladder = json::array();
        for (const auto& e : r.ladder) {
            ladder.push_back({{"epsilon", e.epsilon},
                              {"slope", number(e.slope)},
                              {"stderr", number(e.std_error)},
                              {"predicted", number(e.predicted)}});
        }
        per_v.push_back({{"v", vector_json(r.v)},
                         {"slopes", ladder},
                         {"non_negative", r.non_negative},
                         {"trend_non_decreasing", r.trend_non_decreasing}});
    }
    return {{"t", s.t}, {"mode", mode_name(s.mode)}, {"per_v", per_v}, {"pass", s.pass}, {"delta", s.delta}};
}

json adjoint_json(const AdjointLimitResult& a)
{
    json ladder = json::array();
    for (const auto& e : a.ladder) {
        ladder.push_back({{"s", e.s}, {"mc", number(e.mc)}, {"stderr", number(e.std_error)}, {"analytic", number(e.analytic)}});
    }
    return {{"t", a.t},
            {"y_t", a.y_t},
            {"ladder", ladder},
            {"diagonal_zero", a.diagonal_zero},
            {"matches_analytic", a.matches_analytic},
            {"decreasing", a.decreasing},
            {"integral_abs", number(a.integral_abs)},
            {"pass", a.pass}};
}

} // namespace

std::string report_to_json(const EquilibriumReport& r, int indent)
{
    json j;
    j["utility"] = utility_name(r.utility);
    j["mode"] = mode_name(r.mode);
    j["seed"] = r.seed;
    j["x0"] = r.x0;
    j["verdict"] = r.pass ? "PASS" : "FAIL";
    j["reasons"] = r.reasons;
    if (r.residual) {
        j["residual_sup"] = r.residual_sup;
        j["consistency_sup"] = r.consistency_sup;
        json curve = json::array();
        for (std::size_t i = 0; i < r.residual->size(); ++i) {
            json row = {{"s", r.residual->grid()[i]}, {"residual", (*r.residual)[i]}};
            if (r.alpha) {
                row["alpha"] = vector_json((*r.alpha)[i]);
            }
            if (r.lambda) {
                row["lambda"] = (*r.lambda)[i];
            }
            curve.push_back(row);
        }
        j["curves"] = curve;
    }
    if (r.terminal) {
        const auto& t = *r.terminal;
        j["terminal_limit"] = {{"alpha_T", t.alpha_T},
                               {"candidates", t.candidates},
                               {"stability_exponent", number(t.stability_exponent)},
                               {"well_posed", t.well_posed},
                               {"target_root", t.target_root},
                               {"series_span", t.series_span}};
    }
    if (r.spike) {
        j["slopes"] = spike_json(*r.spike);
    }
    if (r.adjoint_limits) {
        j["adjoint_limits"] = adjoint_json(*r.adjoint_limits);
    }
    if (r.second_order) {
        const auto& s = *r.second_order;
        j["second_order_sign"] = {{"estimate", s.estimate},
                                  {"stderr", s.std_error},
                                  {"residual_sup", s.residual_sup},
                                  {"method", s.method},
                                  {"pass", s.pass}};
    }
    if (!r.target_errors.empty()) {
        json te = json::array();
        for (const auto& e : r.target_errors) {
            json row = {{"t", e.t}, {"analytic", e.analytic}};
            if (e.n_outer > 0) {
                row["estimate"] = e.estimate;
                row["stderr"] = e.std_error;
                row["mean_abs"] = e.mean_abs;
                row["n_outer"] = e.n_outer;
                row["n_inner"] = e.n_inner;
            }
            te.push_back(row);
        }
        j["target_errors"] = te;
    }
    if (r.negative_part) {
        const auto& n = *r.negative_part;
        j["negative_part"] = {{"analytic", tri_state_name(n.analytic)},
                              {"rhs", n.rhs},
                              {"empirical_violation_fraction", n.empirical_violation_fraction},
                              {"n_paths", n.n_paths}};
    }
    return j.dump(indent);
}

} // namespace eqport
