#include "eqport/coeffs.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

namespace eqport {

namespace {

struct QuadState {
    double gamma;
    double m;
};

// Steps (Gamma, M) from the right end of one grid interval to its left end.
// r_hat and theta^2 are linear on the interval; the closed forms reduce to
// exp(int r_hat) for Gamma and a Gauss-Legendre panel sum for the M integral.
QuadState step_left(double h, double rh0, double rh1, double q0, double q1, QuadState right)
{
    const double a0 = 2.0 * rh0 - q0;
    const double a1 = 2.0 * rh1 - q1;
    const double rint = 0.5 * h * (rh0 + rh1);
    const double aint = 0.5 * h * (a0 + a1);

    auto rcum = [&](double x) { return rh0 * x + 0.5 * (rh1 - rh0) * x * x / h; };
    auto acum = [&](double x) { return a0 * x + 0.5 * (a1 - a0) * x * x / h; };
    auto integrand = [&](double x) {
        const double q = q0 + (q1 - q0) * x / h;
        const double gamma_u = right.gamma * std::exp(rint - rcum(x));
        return gamma_u * q * std::exp(acum(x));
    };

    const double scale = std::max({std::abs(a0), std::abs(a1), std::abs(rh0), std::abs(rh1), q0, q1});
    const auto panels = static_cast<int>(std::clamp(std::ceil(scale * h / 0.25), 1.0, 4096.0));
    const double w = h / panels;
    double tail = 0.0;
    for (int p = 0; p < panels; ++p) {
        tail += boost::math::quadrature::gauss<double, 10>::integrate(integrand, p * w, (p + 1) * w);
    }
    return {right.gamma * std::exp(rint), std::exp(aint) * right.m + tail};
}

CoefficientCurves assemble_quadratic(const MarketModel& market, const ScalarCurve& lambda, const ScalarCurve& r_hat,
                                     const std::vector<QuadState>& states)
{
    const auto& g = market.grid;
    const std::size_t n = g.size();
    std::vector<double> gamma(n);
    std::vector<double> m(n);
    std::vector<Eigen::VectorXd> alpha(n);
    for (std::size_t i = 0; i < n; ++i) {
        gamma[i] = states[i].gamma;
        m[i] = states[i].m;
        alpha[i] = (gamma[i] / m[i] - 1.0) * market.theta[i];
    }
    CoefficientCurves c;
    c.utility = Utility::Quadratic;
    c.M = ScalarCurve(g, std::move(m));
    c.Gamma = ScalarCurve(g, std::move(gamma));
    c.alpha = VectorCurve(g, std::move(alpha));
    c.lambda = lambda;
    c.r_hat = r_hat;
    c.consistency = ScalarCurve(g, std::vector<double>(n, 0.0));
    return c;
}

} // namespace

CoefficientCurves solve_quadratic_coeffs(const MarketModel& market, const ScalarCurve& lambda)
{
    if (!same_grid(lambda.grid(), market.grid)) {
        throw Error(ErrorCode::GridError, "lambda must be on the market grid");
    }
    const auto& g = market.grid;
    const std::size_t n = g.size();
    const ScalarCurve r_hat = market.r_minus(lambda);
    const ScalarCurve q = market.theta_sq();

    std::vector<QuadState> states(n);
    states[n - 1] = {1.0, 1.0};
    for (std::size_t i = n - 1; i-- > 0;) {
        states[i] = step_left(g[i + 1] - g[i], r_hat[i], r_hat[i + 1], q[i], q[i + 1], states[i + 1]);
    }
    return assemble_quadratic(market, lambda, r_hat, states);
}

LambdaStar find_lambda_star(const MarketModel& market)
{
    const auto& g = market.grid;
    const std::size_t n = g.size();
    const ScalarCurve q = market.theta_sq();

    const double rT = market.r[n - 1];
    const double muT = market.mu[n - 1];
    if (std::abs(muT - rT) > 1e-12 * std::max(1.0, std::abs(rT))) {
        throw Error(ErrorCode::NoSolution, "terminal mismatch: mu(T)=" + std::to_string(muT) + " differs from r(T)="
                                               + std::to_string(rT) + ", so g(T)=1 cannot equal the required ratio");
    }

    std::vector<double> ghat(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double excess = market.mu[i] - market.r[i];
        if (q[i] <= 1e-300) {
            if (std::abs(excess) > 1e-14) {
                throw Error(ErrorCode::ZeroTheta, "theta vanishes at s=" + std::to_string(g[i]) + " while mu != r");
            }
            ghat[i] = 1.0;
        } else {
            ghat[i] = 1.0 + excess / q[i];
        }
        if (!(ghat[i] > 0.0)) {
            throw Error(ErrorCode::NoSolution, "required ratio touches zero at s=" + std::to_string(g[i]));
        }
    }
    ghat[n - 1] = 1.0;

    auto slope = [&](std::size_t i) {
        if (n == 2) {
            return (ghat[1] - ghat[0]) / (g[1] - g[0]);
        }
        if (i == n - 1) {
            const double h1 = g[n - 1] - g[n - 2];
            const double h2 = g[n - 1] - g[n - 3];
            const double f0 = ghat[n - 1];
            const double f1 = ghat[n - 2];
            const double f2 = ghat[n - 3];
            return f0 * (h1 + h2) / (h1 * h2) - f1 * h2 / (h1 * (h2 - h1)) + f2 * h1 / (h2 * (h2 - h1));
        }
        if (i == 0) {
            return (ghat[1] - ghat[0]) / (g[1] - g[0]);
        }
        return (ghat[i + 1] - ghat[i - 1]) / (g[i + 1] - g[i - 1]);
    };
    auto formula = [&](std::size_t i) {
        return market.r[i] + (ghat[i] - 1.0) * q[i] - slope(i) / ghat[i];
    };

    std::vector<double> lam(n);
    std::vector<QuadState> states(n);
    lam[n - 1] = formula(n - 1);
    states[n - 1] = {1.0, 1.0};

    for (std::size_t i = n - 1; i-- > 0;) {
        const double h = g[i + 1] - g[i];
        auto state_for = [&](double li) {
            return step_left(h, market.r[i] - li, market.r[i + 1] - lam[i + 1], q[i], q[i + 1], states[i + 1]);
        };
        auto f = [&](double li) {
            const QuadState s = state_for(li);
            return s.gamma / s.m - ghat[i];
        };
        const double guess = formula(i);
        const double tol = 1e-15 * std::max(1.0, ghat[i]);
        const double f0 = f(guess);
        double root = guess;
        if (std::abs(f0) > tol) {
            double width = std::max(1e-6, 1e-3 * std::abs(guess));
            double lo = guess;
            double hi = guess;
            double flo = f0;
            double fhi = f0;
            bool bracketed = false;
            for (int k = 0; k < 200 && !bracketed; ++k) {
                lo = guess - width;
                hi = guess + width;
                flo = f(lo);
                fhi = f(hi);
                bracketed = std::isfinite(flo) && std::isfinite(fhi) && (flo <= 0.0) != (fhi <= 0.0);
                width *= 2.0;
            }
            if (!bracketed) {
                throw Error(ErrorCode::NoSolution, "cannot bracket the multiplier at s=" + std::to_string(g[i]));
            }
            std::uintmax_t iters = 200;
            auto stop = [](double a, double b) { return std::abs(b - a) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(a)); };
            const auto br = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, stop, iters);
            root = 0.5 * (br.first + br.second);
            if (std::abs(f(br.first)) < std::abs(f(root))) {
                root = br.first;
            }
            if (std::abs(f(br.second)) < std::abs(f(root))) {
                root = br.second;
            }
        }
        lam[i] = root;
        states[i] = state_for(root);
    }

    ScalarCurve lambda(g, lam);
    LambdaStar out;
    out.curves = assemble_quadratic(market, lambda, market.r_minus(lambda), states);
    out.lambda = lambda;
    out.residual_sup = residual_verdict(equilibrium_residual(out.curves, market)).sup;
    return out;
}

} // namespace eqport
