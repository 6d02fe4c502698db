#include "eqport/coeffs.hpp"
#include "eqport/market.hpp"
#include "eqport/sim.hpp"
#include "eqport/verify.hpp"

#include <benchmark/benchmark.h>

using namespace eqport;

namespace {

MarketModel cubic_market()
{
    MarketSpec s;
    s.horizon = 1.0;
    s.n_steps = 64;
    s.r = CurveSpec::constant(0.05);
    s.mu_x = CurveSpec::constant(0.09);
    s.sigma = CurveSpec::constant(0.2);
    s.mu = CurveSpec::constant(0.03);
    return build_market(s);
}

void BM_Simulate(benchmark::State& state)
{
    const MarketModel m = cubic_market();
    const FeedbackControl k = feedback_control(particular_solution_cubic(m), m);
    SimulationConfig cfg;
    cfg.n_paths = static_cast<std::size_t>(state.range(0));
    cfg.n_steps = 64;
    cfg.scheme = state.range(1) == 0 ? Scheme::ExactLog : Scheme::EulerMaruyama;
    for (auto _ : state) {
        benchmark::DoNotOptimize(simulate_wealth(m, k, 1.0, cfg));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0) * 64);
}

void BM_SpikeTest(benchmark::State& state)
{
    const MarketModel m = cubic_market();
    const FeedbackControl k = feedback_control(particular_solution_cubic(m), m);
    PerturbationSpec spec;
    spec.n_paths = static_cast<std::size_t>(state.range(0));
    spec.n_steps = 64;
    for (auto _ : state) {
        benchmark::DoNotOptimize(spike_perturbation_test(m, k, Utility::Cubic, spec));
    }
}

void BM_TargetError(benchmark::State& state)
{
    const MarketModel m = cubic_market();
    const FeedbackControl k = feedback_control(particular_solution_cubic(m), m);
    SimulationConfig cfg;
    cfg.n_paths = static_cast<std::size_t>(state.range(0));
    cfg.n_steps = 16;
    for (auto _ : state) {
        benchmark::DoNotOptimize(conditional_target_error(m, k, 1.0, 0.5, cfg, 100));
    }
}

} // namespace

BENCHMARK(BM_Simulate)->Args({10000, 0})->Args({10000, 1})->Args({100000, 0})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SpikeTest)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TargetError)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
