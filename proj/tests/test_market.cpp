#include "eqport/curve.hpp"
#include "eqport/market.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace eqport;
using eqport::testing::error_code_of;
using eqport::testing::flat_market;
using eqport::testing::market_from_json;

TEST(Market, ZeroExcessReturnGivesZeroTheta)
{
    const MarketModel m = flat_market(0.03, 0.03, 1.0, 0.03);
    for (std::size_t i = 0; i < m.grid.size(); ++i) {
        EXPECT_EQ(m.theta[i](0), 0.0);
    }
}

TEST(Market, HandEvaluatedTheta)
{
    const MarketModel m = flat_market(0.03, 0.07, 0.2, 0.03);
    for (std::size_t i = 0; i < m.grid.size(); ++i) {
        EXPECT_NEAR(m.theta[i](0), 0.2, 1e-15);
    }
    EXPECT_NEAR(m.theta_sq()(0.37), 0.04, 1e-15);
}

TEST(Market, SingularSigmaRejected)
{
    const auto code = error_code_of([] {
        market_from_json(R"({"dim": 2, "horizon": 1, "r": 0.03, "mu_x": [0.05, 0.06], "mu": 0.03,
            "sigma": {"grid": [0, 0.5, 1], "values": [[[0.2, 0], [0, 0.3]], [[0.2, 0.2], [0.2, 0.2]], [[0.2, 0], [0, 0.3]]]}})");
    });
    ASSERT_TRUE(code.has_value());
    EXPECT_EQ(*code, ErrorCode::SingularSigma);
}

TEST(Market, ParseErrors)
{
    EXPECT_EQ(error_code_of([] { parse_market_spec("{not json"); }), ErrorCode::ParseError);
    EXPECT_EQ(error_code_of([] { parse_market_spec(R"({"r": 0.1, "mu_x": 0.1, "sigma": 0.2, "mu": 0.1})"); }),
              ErrorCode::ParseError);
    EXPECT_EQ(error_code_of([] { parse_market_spec(R"({"horizon": 1, "mu_x": 0.1, "sigma": 0.2, "mu": 0.1})"); }),
              ErrorCode::ParseError);
}

TEST(Market, GridAndDimensionErrors)
{
    EXPECT_EQ(error_code_of([] {
                  market_from_json(R"({"horizon": 1, "grid": [0, 0.5, 0.5, 1], "r": 0.03, "mu_x": 0.05,
                      "sigma": 0.2, "mu": 0.03})");
              }),
              ErrorCode::GridError);
    EXPECT_EQ(error_code_of([] {
                  market_from_json(R"({"dim": 2, "horizon": 1, "r": 0.03, "mu_x": [0.05, 0.06, 0.07],
                      "sigma": [[0.2, 0], [0, 0.3]], "mu": 0.03})");
              }),
              ErrorCode::DimensionMismatch);
    EXPECT_TRUE(error_code_of([] { ScalarCurve({0.0, 1.0}, {1.0}); }).has_value());
}

TEST(Market, SpecRoundTrip)
{
    const std::string text = R"({"dim": 2, "horizon": 2, "grid": {"n_steps": 16},
        "r": {"grid": [0, 2], "values": [0.02, 0.04]}, "mu_x": [0.06, 0.08],
        "sigma": [[0.2, 0.0], [0.05, 0.3]], "mu": 0.03})";
    const MarketModel a = market_from_json(text);
    const MarketModel b = market_from_json(market_spec_to_json(a.spec));
    ASSERT_EQ(a.grid, b.grid);
    for (std::size_t i = 0; i < a.grid.size(); ++i) {
        EXPECT_EQ(a.r[i], b.r[i]);
        EXPECT_EQ(a.theta[i], b.theta[i]);
    }
}

TEST(Integrate, Examples)
{
    const ScalarCurve c = ScalarCurve::constant(1.0, 0.7);
    EXPECT_NEAR(integrate(c, 0.2, 0.9), 0.7 * 0.7, 1e-15);
    EXPECT_EQ(integrate(c, 0.4, 0.4), 0.0);
    const ScalarCurve lin({0.0, 1.0}, {0.0, 1.0});
    EXPECT_NEAR(integrate(lin, 0.0, 1.0), 0.5, 1e-15);
    EXPECT_NEAR(integrate(lin, 0.25, 0.75), 0.25, 1e-15);
}

TEST(Integrate, RunningIntegralAgrees)
{
    const ScalarCurve c({0.0, 0.3, 0.55, 1.0}, {0.1, -0.2, 0.4, 0.05});
    const RunningIntegral ri(c);
    for (double a : {0.0, 0.1, 0.3, 0.6}) {
        for (double b : {0.6, 0.8, 1.0}) {
            EXPECT_NEAR(ri.integral(a, b), integrate(c, a, b), 1e-15);
        }
    }
}

TEST(MarketProperties, ReconstructionAndAdditivity)
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        const int d = 1 + trial % 3;
        const std::size_t n = 3 + static_cast<std::size_t>(unif(rng) * 20);
        MarketSpec s;
        s.dim = d;
        s.horizon = 0.5 + 2.0 * unif(rng);
        s.n_steps = n;
        std::vector<double> knots{0.0, 0.4 * s.horizon, s.horizon};
        std::vector<Eigen::MatrixXd> sig;
        std::vector<Eigen::MatrixXd> mux;
        std::vector<double> rv;
        for (std::size_t k = 0; k < knots.size(); ++k) {
            Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
            for (int i = 0; i < d; ++i) {
                a(i, i) = 0.1 + 0.3 * unif(rng);
                for (int j = 0; j < i; ++j) {
                    a(i, j) = 0.1 * (unif(rng) - 0.5);
                }
            }
            sig.push_back(a);
            Eigen::MatrixXd m(d, 1);
            for (int i = 0; i < d; ++i) {
                m(i, 0) = 0.02 + 0.1 * unif(rng);
            }
            mux.push_back(m);
            rv.push_back(0.01 + 0.04 * unif(rng));
        }
        s.sigma = CurveSpec::tabulated(knots, sig);
        s.mu_x = CurveSpec::tabulated(knots, mux);
        s.r = CurveSpec::tabulated(knots, rv);
        s.mu = CurveSpec::constant(0.03);
        const MarketModel m = build_market(s);
        for (std::size_t i = 0; i < m.grid.size(); ++i) {
            const Eigen::VectorXd recon = m.sigma[i] * m.theta[i] + Eigen::VectorXd::Constant(d, m.r[i]);
            EXPECT_LE((recon - m.mu_x[i]).norm(), 1e-12 * m.mu_x[i].norm());
            EXPECT_EQ(m.r(m.grid[i]), m.r[i]);
        }
        const double a = unif(rng) * m.horizon;
        const double b = a + unif(rng) * (m.horizon - a);
        const double c = b + unif(rng) * (m.horizon - b);
        const double whole = integrate(m.r, a, c);
        EXPECT_NEAR(integrate(m.r, a, b) + integrate(m.r, b, c), whole, 1e-12 * std::max(1.0, std::abs(whole)));
    }
}
