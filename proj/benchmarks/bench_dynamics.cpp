#include "chaosflow/dynamics.hpp"

#include <benchmark/benchmark.h>

using namespace chaosflow;

static void BM_IntegrateLorenz63(benchmark::State& state) {
    const SystemSpec sys;
    const Eigen::Vector3d x0(1.0, 1.0, 1.0);
    const auto steps = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        Trajectory t = integrate(sys, x0, 0.01, steps, 10);
        benchmark::DoNotOptimize(t.states.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_IntegrateLorenz63)->Arg(1000)->Arg(10000);

static void BM_IntegrateLorenz96(benchmark::State& state) {
    SystemSpec sys;
    sys.params = Lorenz96Params{static_cast<int>(state.range(0)), 8.0, 1.0};
    Eigen::VectorXd x0 = Eigen::VectorXd::Constant(state.range(0), 8.0);
    x0(0) = 8.01;
    for (auto _ : state) {
        Trajectory t = integrate(sys, x0, 0.01, 1000, 10);
        benchmark::DoNotOptimize(t.states.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 1000);
}
BENCHMARK(BM_IntegrateLorenz96)->Arg(8)->Arg(40);

BENCHMARK_MAIN();
