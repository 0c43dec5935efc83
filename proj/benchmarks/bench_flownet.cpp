#include "chaosflow/flownet.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

using namespace chaosflow;

namespace {

std::vector<Eigen::MatrixXd> make_batch(int obs_dim, int memory_len, int K, int B) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> nd;
    std::vector<Eigen::MatrixXd> batch(B);
    for (auto& seq : batch) {
        seq.resize(memory_len + K + 1, obs_dim);
        for (Eigen::Index i = 0; i < seq.size(); ++i) seq.data()[i] = nd(rng);
    }
    return batch;
}

} // namespace

static void BM_ForwardBatch(benchmark::State& state) {
    const FlowMapModel model = init_model(3, 0, {20, 20, 20}, 1);
    Eigen::MatrixXd inputs(50, model.input_dim());
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = nd(rng);
    for (auto _ : state) {
        Eigen::MatrixXd out = forward_batch(model, inputs);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * inputs.rows());
}
BENCHMARK(BM_ForwardBatch);

static void BM_LossGradient(benchmark::State& state) {
    const int memory_len = static_cast<int>(state.range(0));
    const FlowMapModel model = init_model(3, memory_len, {20, 20, 20}, 1);
    const auto batch = make_batch(3, memory_len, 10, 50);
    for (auto _ : state) {
        ModelGrads g = loss_gradient(model, batch);
        benchmark::DoNotOptimize(g.weights.data());
    }
}
BENCHMARK(BM_LossGradient)->Arg(0)->Arg(10);

static void BM_AdamStep(benchmark::State& state) {
    FlowMapModel model = init_model(3, 10, {20, 20, 20}, 1);
    const ModelGrads grads = loss_gradient(model, make_batch(3, 10, 10, 8));
    AdamState adam = make_adam_state(model);
    for (auto _ : state) {
        adam_step(model, grads, adam, 1e-3);
        benchmark::DoNotOptimize(model.weights.data());
    }
}
BENCHMARK(BM_AdamStep);

static void BM_Rollout(benchmark::State& state) {
    FlowMapModel model = init_model(3, 2, {20, 20, 20}, 1);
    // zero increments keep an arbitrarily long rollout on the attractor of
    // the identity map while exercising the full forward path
    model.weights.back().setZero();
    Eigen::MatrixXd window = Eigen::MatrixXd::Random(3, 3) * 0.1;
    const int steps = static_cast<int>(state.range(0));
    for (auto _ : state) {
        Eigen::MatrixXd out = recurrent_rollout(model, window, steps);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_Rollout)->Arg(100)->Arg(1000);
