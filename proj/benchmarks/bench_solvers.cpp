#include "eqport/coeffs.hpp"
#include "eqport/market.hpp"

#include <benchmark/benchmark.h>

using namespace eqport;

namespace {

MarketModel market(std::size_t n_steps)
{
    MarketSpec s;
    s.horizon = 1.0;
    s.n_steps = n_steps;
    s.r = CurveSpec::constant(0.05);
    s.mu_x = CurveSpec::constant(0.09);
    s.sigma = CurveSpec::constant(0.2);
    s.mu = CurveSpec::tabulated({0.0, 1.0}, {0.03, 0.045});
    return build_market(s);
}

void BM_Cubic(benchmark::State& state)
{
    const MarketModel m = market(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_cubic_coeffs(m));
    }
}

void BM_Quartic(benchmark::State& state)
{
    const MarketModel m = market(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(solve_quartic_coeffs(m));
    }
}

void BM_LambdaStar(benchmark::State& state)
{
    MarketSpec s = market(2).spec;
    s.n_steps = static_cast<std::size_t>(state.range(0));
    s.mu = CurveSpec::tabulated({0.0, 1.0}, {0.03, 0.05});
    const MarketModel m = build_market(s);
    for (auto _ : state) {
        benchmark::DoNotOptimize(find_lambda_star(m));
    }
}

} // namespace

BENCHMARK(BM_Cubic)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_Quartic)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_LambdaStar)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK_MAIN();
