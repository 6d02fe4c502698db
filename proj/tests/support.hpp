#pragma once

#include "eqport/errors.hpp"
#include "eqport/market.hpp"

#include <optional>
#include <string>

namespace eqport::testing {

inline MarketModel flat_market(double r, double mu_x, double sigma, double mu, std::size_t n_steps = 64,
                               double horizon = 1.0)
{
    MarketSpec s;
    s.horizon = horizon;
    s.n_steps = n_steps;
    s.r = CurveSpec::constant(r);
    s.mu_x = CurveSpec::constant(mu_x);
    s.sigma = CurveSpec::constant(sigma);
    s.mu = CurveSpec::constant(mu);
    return build_market(s);
}

inline MarketModel market_from_json(const std::string& text)
{
    return build_market(parse_market_spec(text));
}

template<class F>
std::optional<ErrorCode> error_code_of(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

} // namespace eqport::testing
