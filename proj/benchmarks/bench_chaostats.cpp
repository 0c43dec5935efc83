#include "chaosflow/chaostats.hpp"
#include "chaosflow/dynamics.hpp"

#include <benchmark/benchmark.h>

using namespace chaosflow;

namespace {

const Trajectory& reference_trajectory() {
    static const Trajectory t =
        integrate(SystemSpec{}, Eigen::Vector3d(10.0, 10.0, 20.0), 0.01, 10000, 10);
    return t;
}

} // namespace

static void BM_Autocorrelation(benchmark::State& state) {
    const Eigen::VectorXd x = reference_trajectory().states.col(0);
    for (auto _ : state) {
        auto r = autocorrelation(x, 200);
        benchmark::DoNotOptimize(r.data());
    }
}
BENCHMARK(BM_Autocorrelation);

static void BM_CorrelationDimension(benchmark::State& state) {
    const Embedding emb = delay_embed(reference_trajectory(), {3, 1});
    CorrDimConfig cfg;
    cfg.n_points = static_cast<int>(state.range(0));
    for (auto _ : state) {
        CorrDimResult r = correlation_dimension(emb, cfg);
        benchmark::DoNotOptimize(r.dimension);
    }
}
BENCHMARK(BM_CorrelationDimension)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_ApproximateEntropy(benchmark::State& state) {
    const Trajectory& t = reference_trajectory();
    ApEnConfig cfg;
    cfg.max_points = static_cast<int>(state.range(0));
    for (auto _ : state) {
        double v = approximate_entropy(t.states, {3, 1}, cfg);
        benchmark::DoNotOptimize(v);
    }
}
BENCHMARK(BM_ApproximateEntropy)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_LyapunovExponent(benchmark::State& state) {
    const Embedding emb = delay_embed(reference_trajectory(), {3, 1});
    LyapConfig cfg;
    cfg.min_separation = 348;
    for (auto _ : state) {
        LyapResult r = lyapunov_exponent(emb, 0.01, cfg);
        benchmark::DoNotOptimize(r.exponent);
    }
}
BENCHMARK(BM_LyapunovExponent)->Unit(benchmark::kMillisecond);
