#include "cli.hpp"
#include "eqport/coeffs.hpp"
#include "eqport/market.hpp"
#include "eqport/sim.hpp"
#include "eqport/verify.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>

using namespace eqport;

namespace {

using Clock = std::chrono::steady_clock;

MarketModel flat_market(double r, double mu_x, double sigma, double mu, std::size_t n_steps)
{
    MarketSpec s;
    s.horizon = 1.0;
    s.n_steps = n_steps;
    s.r = CurveSpec::constant(r);
    s.mu_x = CurveSpec::constant(mu_x);
    s.sigma = CurveSpec::constant(sigma);
    s.mu = CurveSpec::constant(mu);
    return build_market(s);
}

MarketModel linear_target_market(double r, double mu0, double mu1, std::size_t n_steps)
{
    MarketSpec s;
    s.horizon = 1.0;
    s.n_steps = n_steps;
    s.r = CurveSpec::constant(r);
    s.mu_x = CurveSpec::constant(r + 0.04);
    s.sigma = CurveSpec::constant(0.2);
    s.mu = CurveSpec::tabulated({0.0, 1.0}, {mu0, mu1});
    return build_market(s);
}

double sup_abs(const ScalarCurve& c)
{
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        s = std::max(s, std::abs(c[i]));
    }
    return s;
}

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Line {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void criterion(int id, const std::string& title, const std::function<void(Line&)>& body)
{
    Line line;
    line.detail.precision(3);
    const auto t0 = Clock::now();
    try {
        body(line);
    } catch (const std::exception& e) {
        line.pass = false;
        line.detail << " [exception: " << e.what() << "]";
    }
    const double secs = seconds_since(t0);
    if (!line.pass) {
        ++failures;
    }
    std::cout << "AC" << id << ' ' << (line.pass ? "PASS" : "FAIL") << "  " << title << " |" << line.detail.str()
              << " (" << secs << " s)" << std::endl;
}

Eigen::VectorXd flat_vector(double v)
{
    return Eigen::VectorXd::Constant(1, v);
}

} // namespace

int main()
{
    std::cout.precision(3);

    criterion(1, "cubic particular solution by RK4", [](Line& l) {
        const auto t0 = Clock::now();
        const MarketModel m = flat_market(0.05, 0.09, 0.2, 0.03, 200);
        const CoefficientCurves c = solve_cubic_coeffs(m);
        const double secs = seconds_since(t0);
        double err = 0.0;
        for (std::size_t i = 0; i < m.grid.size(); ++i) {
            err = std::max(err, std::abs(c.alpha_scalar(i) + 0.5));
        }
        const double em = std::abs(c.M[0] - std::exp(0.03));
        const double en = std::abs((*c.N)[0] - 2.0 * std::exp(0.02));
        l.detail << " alpha err " << err << ", M(0) err " << em << ", N(0) err " << en;
        l.require(err <= 1e-8, "alpha sup error <= 1e-8");
        l.require(em <= 1e-8 && en <= 1e-8, "M(0), N(0) within 1e-8");
        l.require(secs < 1.0, "runtime < 1 s");
    });

    criterion(2, "quadratic trivial fixed point", [](Line& l) {
        const auto t0 = Clock::now();
        const MarketModel m = flat_market(0.05, 0.09, 0.2, 0.05, 200);
        const LambdaStar ls = find_lambda_star(m);
        const double secs = seconds_since(t0);
        double el = 0.0;
        double ea = 0.0;
        for (std::size_t i = 0; i < m.grid.size(); ++i) {
            el = std::max(el, std::abs(ls.lambda[i] - m.r[i]));
            ea = std::max(ea, ls.curves.alpha[i].norm());
        }
        const double res = sup_abs(equilibrium_residual(ls.curves, m));
        l.detail << " lambda-r " << el << ", alpha " << ea << ", residual " << res;
        l.require(el <= 1e-10 && ea <= 1e-10 && res <= 1e-10, "all within 1e-10");
        l.require(secs < 1.0, "runtime < 1 s");
    });

    criterion(3, "lambda* residual on a smooth target", [](Line& l) {
        const auto t0 = Clock::now();
        const MarketModel m = linear_target_market(0.03, 0.05, 0.03, 1023);
        const LambdaStar ls = find_lambda_star(m);
        const CoefficientCurves again = solve_quadratic_coeffs(m, ls.lambda);
        const double res = sup_abs(equilibrium_residual(again, m));
        const double secs = seconds_since(t0);
        l.detail << " grid " << m.grid.size() << ", residual sup " << res;
        l.require(m.grid.size() == 1024, "1024 grid points");
        l.require(res <= 1e-8, "residual <= 1e-8");
        l.require(secs < 5.0, "runtime < 5 s");
    });

    criterion(4, "moving-target constraint", [](Line& l) {
        const auto t0 = Clock::now();
        const MarketModel mq = linear_target_market(0.03, 0.05, 0.03, 64);
        const FeedbackControl kq = feedback_control(find_lambda_star(mq).curves, mq);
        const MarketModel mc = flat_market(0.05, 0.09, 0.2, 0.03, 64);
        const FeedbackControl kc = feedback_control(solve_cubic_coeffs(mc), mc);
        double worst = 0.0;
        for (int j = 0; j < 16; ++j) {
            const double t = j / 16.0;
            worst = std::max(worst, std::abs(analytic_target_error(mq, kq, t).analytic));
            worst = std::max(worst, std::abs(analytic_target_error(mc, kc, t).analytic));
        }
        l.detail << " analytic sup " << worst;
        l.require(worst <= 1e-9, "analytic error <= 1e-9 at 16 times");
        SimulationConfig cfg;
        cfg.n_paths = 10000;
        cfg.n_steps = 16;
        cfg.seed = 2024;
        cfg.stream = 4;
        for (const auto& [name, m, k] : {std::tuple{"quadratic", &mq, &kq}, std::tuple{"cubic", &mc, &kc}}) {
            for (double t : {0.0, 0.5}) {
                const TargetError e = conditional_target_error(*m, *k, 1.0, t, cfg, 1000);
                l.detail << "; " << name << " t=" << t << " mc " << e.estimate << " +- " << e.std_error;
                l.require(std::abs(e.estimate) <= 3.0 * e.std_error, std::string(name) + " MC within 3 stderr");
            }
        }
        l.require(seconds_since(t0) < 120.0, "runtime < 2 min");
    });

    criterion(5, "spike-perturbation suite", [](Line& l) {
        const MarketModel mq = linear_target_market(0.03, 0.05, 0.03, 64);
        const CoefficientCurves cq = find_lambda_star(mq).curves;
        const MarketModel mc = flat_market(0.05, 0.09, 0.2, 0.03, 64);
        const CoefficientCurves cc = solve_cubic_coeffs(mc);
        PerturbationSpec spec;
        spec.n_paths = 100000;
        spec.n_steps = 64;
        spec.seed = 1;
        spec.vs = {flat_vector(1.0), flat_vector(-1.0)};
        double worst_per_eps = 0.0;
        auto run = [&](const MarketModel& m, const FeedbackControl& k, Utility u) {
            const auto t0 = Clock::now();
            const SpikeTestResult r = spike_perturbation_test(m, k, u, spec);
            worst_per_eps = std::max(worst_per_eps, seconds_since(t0) / static_cast<double>(spec.epsilons.size()));
            return r;
        };
        const SpikeTestResult q = run(mq, feedback_control(cq, mq), Utility::Quadratic);
        const SpikeTestResult c = run(mc, feedback_control(cc, mc), Utility::Cubic);
        const SpikeTestResult bad = run(mq, scale_gain(feedback_control(cq, mq), 2.0), Utility::Quadratic);
        auto all_slopes_ok = [](const SpikeTestResult& r) {
            for (const auto& pv : r.per_v) {
                for (const auto& e : pv.ladder) {
                    if (e.slope < -3.0 * e.std_error) {
                        return false;
                    }
                }
            }
            return true;
        };
        double worst_bad = 0.0;
        for (const auto& pv : bad.per_v) {
            const auto& e = pv.ladder.back();
            worst_bad = std::min(worst_bad, e.slope / e.std_error);
        }
        l.detail << " quadratic " << (q.pass ? "pass" : "fail") << ", cubic " << (c.pass ? "pass" : "fail")
                 << ", doubled gain min slope/stderr " << worst_bad;
        l.require(all_slopes_ok(q) && q.pass, "quadratic equilibrium slopes >= -3 stderr");
        l.require(all_slopes_ok(c) && c.pass, "cubic equilibrium slopes >= -3 stderr");
        l.require(!bad.pass && worst_bad < -3.0, "doubled gain detected");
        l.require(worst_per_eps < 120.0, "runtime < 2 min per epsilon");
    });

    criterion(6, "adjoint identities", [](Line& l) {
        const MarketModel m = linear_target_market(0.05, 0.035, 0.04, 64);
        const MarketModel mq = linear_target_market(0.05, 0.035, 0.05, 64);
        const CoefficientCurves q = find_lambda_star(mq).curves;
        std::mt19937_64 rng(6);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        int nonzero = 0;
        struct Case {
            const MarketModel* market;
            CoefficientCurves curves;
        };
        const std::vector<Case> cases{{&mq, q}, {&m, solve_cubic_coeffs(m)}, {&m, solve_quartic_coeffs(m)}};
        for (const auto& cs : cases) {
            const AdjointEvaluator ev = make_adjoint_evaluator(cs.curves, *cs.market);
            for (int i = 0; i < 100; ++i) {
                const double t = unif(rng);
                const double y = 10.0 * (unif(rng) - 0.5);
                if (adjoint_coefficient(ev, t, t, y, y) != 0.0 || adjoint_lambda(ev, t, t, y, y).norm() != 0.0) {
                    ++nonzero;
                }
            }
        }
        l.detail << " diagonal nonzero " << nonzero << "/300";
        l.require(nonzero == 0, "Lambda_t^t = 0 exactly");
        AdjointTestOptions o;
        o.n_paths = 20000;
        o.seed = 9;
        for (const auto& cs : cases) {
            const AdjointEvaluator ev = make_adjoint_evaluator(cs.curves, *cs.market);
            const AdjointLimitResult r = adjoint_limit_test(ev, *cs.market, feedback_control(cs.curves, *cs.market), 0.2,
                                                            {0.52, 0.36, 0.28, 0.24, 0.22, 0.2}, o);
            l.detail << "; " << utility_name(cs.curves.utility) << (r.pass ? " ok" : " bad");
            l.require(r.pass, std::string(utility_name(cs.curves.utility)) + " MC limit");
        }
    });

    criterion(7, "consistency residuals and RK4 order", [](Line& l) {
        for (Utility u : {Utility::Cubic, Utility::Quartic}) {
            double v[3];
            double cons = 0.0;
            std::size_t n = 32;
            for (double& x : v) {
                const MarketModel m = flat_market(0.05, 0.09, 0.2, 0.04, n);
                const CoefficientCurves c = solve_coeffs(m, u);
                cons = std::max(cons, sup_abs(c.consistency));
                x = c.M[0];
                n *= 2;
            }
            const MarketModel smooth = linear_target_market(0.05, 0.03, 0.045, 128);
            cons = std::max(cons, sup_abs(solve_coeffs(smooth, u).consistency));
            const double ratio = (v[0] - v[1]) / (v[1] - v[2]);
            l.detail << ' ' << utility_name(u) << " consistency " << cons << " ratio " << ratio << ';';
            l.require(cons <= 1e-9, "consistency <= 1e-9");
            l.require(ratio >= 12.0 && ratio <= 20.0, "ratio in [12, 20]");
        }
    });

    criterion(8, "necessary-condition algebra", [](Line& l) {
        const CubicCondition a = necessary_condition_cubic(flat_market(0.05, 0.09, 0.2, 0.05, 8));
        const CubicCondition b = necessary_condition_cubic(flat_market(0.05, 0.09, 0.2, 0.05 - 0.0225, 8));
        const CubicCondition c = necessary_condition_cubic(flat_market(0.05, 0.09, 0.2, 0.01, 8));
        l.detail << " eta " << a.eta << ", " << b.eta << ", " << c.eta;
        l.require(a.roots.size() == 1 && std::abs(a.roots[0] + 1.5) <= 1e-12 && a.admissible, "eta = 0");
        l.require(b.roots.size() == 1 && std::abs(b.roots[0] + 0.75) <= 1e-12 && b.double_root && b.admissible,
                  "eta = 9/16");
        l.require(c.roots.empty() && !c.admissible, "eta = 1");
    });

    criterion(9, "Girsanov checks", [](Line& l) {
        const MarketModel m = flat_market(0.03, 0.07, 0.2, 0.03, 32);
        SimulationConfig cfg;
        cfg.n_paths = 100000;
        cfg.n_steps = 32;
        cfg.seed = 99;
        FeedbackControl k = zero_control(m, Utility::Quadratic);
        std::vector<Eigen::VectorXd> gain;
        for (double s : m.grid) {
            gain.push_back(flat_vector(0.4 * std::sin(6.0 * s) - 0.1));
        }
        k.gain = VectorCurve(m.grid, gain);
        const PathEnsemble e = simulate_wealth(m, k, 1.5, cfg);
        const Eigen::VectorXd w = girsanov_weights(e, m);
        const double n = static_cast<double>(w.size());
        const double wm = w.mean();
        const double wse = std::sqrt((w.array() - wm).square().sum() / (n - 1.0) / n);
        const Eigen::VectorXd d = w.cwiseProduct(e.wealth.col(32)) * std::exp(-integrate(m.r, 0.0, 1.0));
        const double dm = d.mean();
        const double dse = std::sqrt((d.array() - dm).square().sum() / (n - 1.0) / n);
        l.detail << " mean weight " << wm << " +- " << wse << ", discounted wealth " << dm << " +- " << dse;
        l.require(std::abs(wm - 1.0) <= 3.0 * wse, "mean weight within 3 stderr of 1");
        l.require(std::abs(dm - 1.5) <= 3.0 * dse, "weighted discounted wealth within 3 stderr of x0");
    });

    criterion(10, "x^- tri-state", [](Line& l) {
        const auto t0 = Clock::now();
        struct Case {
            double mu;
            TriState expected;
            int exit_code;
        };
        for (const Case& c : {Case{0.05, TriState::Equality, 0}, Case{0.03, TriState::Holds, 0},
                              Case{0.07, TriState::Fails, 3}}) {
            const MarketModel m = flat_market(0.05, 0.09, 0.2, c.mu, 16);
            const NegativePartResult r = negative_part_condition(m, zero_control(m, Utility::NegativePart), 1.0, 0.0, 100, 1);
            l.detail << ' ' << tri_state_name(r.analytic);
            l.require(r.analytic == c.expected, "tri-state for mu=" + std::to_string(c.mu));
        }
        std::ostringstream sink;
        const std::string dir = std::string(EQPORT_CONFIG_DIR);
        const std::string out = (std::filesystem::temp_directory_path() / "eqport_acceptance_x").string();
        const int e0 = cli::run({"verify", "--config", dir + "/negpart_equal.json", "--out", out}, sink, sink);
        const int e1 = cli::run({"verify", "--config", dir + "/negpart_below.json", "--out", out}, sink, sink);
        const int e2 = cli::run({"verify", "--config", dir + "/negpart_above.json", "--out", out}, sink, sink);
        std::filesystem::remove_all(out);
        l.detail << "; exit codes " << e0 << ' ' << e1 << ' ' << e2;
        l.require(e0 == 0 && e1 == 0 && e2 == 3, "exit codes 0, 0, 3");
        l.require(seconds_since(t0) < 1.0, "instantaneous");
    });

    criterion(11, "determinism across worker counts", [](Line& l) {
        MarketSpec s;
        s.dim = 2;
        s.horizon = 1.0;
        s.n_steps = 32;
        s.r = CurveSpec::constant(0.03);
        Eigen::MatrixXd mux(2, 1);
        mux << 0.07, 0.05;
        Eigen::MatrixXd sig(2, 2);
        sig << 0.2, 0.0, 0.05, 0.3;
        s.mu_x = CurveSpec::constant(mux);
        s.sigma = CurveSpec::constant(sig);
        s.mu = CurveSpec::constant(0.04);
        const MarketModel m = build_market(s);
        const ScalarCurve lambda(m.grid, std::vector<double>(m.grid.size(), 0.01));
        CoefficientCurves c = solve_quadratic_coeffs(m, lambda);
        c.lambda = lambda;
        const FeedbackControl k = feedback_control(c, m);
        bool same = true;
        for (Scheme scheme : {Scheme::ExactLog, Scheme::EulerMaruyama}) {
            for (bool anti : {false, true}) {
                SimulationConfig cfg;
                cfg.n_paths = 5001;
                cfg.n_steps = 40;
                cfg.seed = 123;
                cfg.scheme = scheme;
                cfg.antithetic = anti;
                cfg.workers = 1;
                const PathEnsemble ref = simulate_wealth(m, k, 1.0, cfg);
                for (unsigned w : {2u, 4u, 7u}) {
                    cfg.workers = w;
                    const PathEnsemble e = simulate_wealth(m, k, 1.0, cfg);
                    same = same && e.wealth == ref.wealth && e.brownian_increments == ref.brownian_increments
                           && e.girsanov_weight == ref.girsanov_weight;
                }
            }
        }
        const MarketModel m1 = flat_market(0.05, 0.09, 0.2, 0.03, 32);
        const FeedbackControl k1 = feedback_control(particular_solution_cubic(m1), m1);
        PerturbationSpec spec;
        spec.n_paths = 4000;
        spec.n_steps = 32;
        spec.workers = 1;
        const SpikeTestResult a = spike_perturbation_test(m1, k1, Utility::Cubic, spec);
        spec.workers = 5;
        const SpikeTestResult b = spike_perturbation_test(m1, k1, Utility::Cubic, spec);
        for (std::size_t i = 0; i < a.per_v.size(); ++i) {
            for (std::size_t j = 0; j < a.per_v[i].ladder.size(); ++j) {
                same = same && a.per_v[i].ladder[j].slope == b.per_v[i].ladder[j].slope
                       && a.per_v[i].ladder[j].std_error == b.per_v[i].ladder[j].std_error;
            }
        }
        l.detail << (same ? " bit-identical" : " differs");
        l.require(same, "bit-identical ensembles and spike estimates");
    });

    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " criteria FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
