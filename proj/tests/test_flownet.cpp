#include "chaosflow/dynamics.hpp"
#include "chaosflow/errors.hpp"
#include "chaosflow/flownet.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <vector>

using namespace chaosflow;

namespace {

bool params_equal(const FlowMapModel& a, const FlowMapModel& b) {
    if (a.n_layers() != b.n_layers()) return false;
    for (std::size_t l = 0; l < a.n_layers(); ++l) {
        if (a.weights[l] != b.weights[l]) return false;
        if (a.biases[l] != b.biases[l]) return false;
    }
    return true;
}

// 1 input -> hidden [2] -> 1 output with parameters chosen for hand evaluation
FlowMapModel tiny_model() {
    FlowMapModel m = init_model(1, 0, {2}, 0);
    m.weights[0] << 1.0, -1.0;
    m.biases[0] << 0.5, 0.5;
    m.weights[1] << 1.0, 1.0;
    m.biases[1] << 0.25;
    return m;
}

FlowMapModel random_model(int obs_dim, int memory_len, const std::vector<int>& hidden,
                          std::uint64_t seed) {
    return init_model(obs_dim, memory_len, hidden, seed);
}

std::vector<Eigen::MatrixXd> random_batch(int obs_dim, int memory_len, int K, int B,
                                          std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<Eigen::MatrixXd> batch;
    for (int b = 0; b < B; ++b) {
        Eigen::MatrixXd seq(memory_len + K + 1, obs_dim);
        for (Eigen::Index i = 0; i < seq.rows(); ++i)
            for (Eigen::Index j = 0; j < seq.cols(); ++j) seq(i, j) = nd(rng);
        batch.push_back(seq);
    }
    return batch;
}

// central finite differences through recurrent_loss
double fd_rel_error(FlowMapModel model, const std::vector<Eigen::MatrixXd>& batch) {
    const ModelGrads grads = loss_gradient(model, batch);
    double max_rel = 0.0;
    double grad_inf = 1e-8;
    for (const auto& g : grads.weights) grad_inf = std::max(grad_inf, g.cwiseAbs().maxCoeff());
    for (const auto& g : grads.biases) grad_inf = std::max(grad_inf, g.cwiseAbs().maxCoeff());
    const double floor = 1e-3 * grad_inf;

    auto probe = [&](double* param, double analytic) {
        const double saved = *param;
        const double h = 1e-5 * std::max(1.0, std::abs(saved));
        *param = saved + h;
        const double up = recurrent_loss(model, batch);
        *param = saved - h;
        const double dn = recurrent_loss(model, batch);
        *param = saved;
        const double fd = (up - dn) / (2.0 * h);
        const double denom = std::max({std::abs(analytic), std::abs(fd), floor});
        max_rel = std::max(max_rel, std::abs(analytic - fd) / denom);
    };
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        for (Eigen::Index i = 0; i < model.weights[l].size(); ++i)
            probe(model.weights[l].data() + i, grads.weights[l](i));
        for (Eigen::Index i = 0; i < model.biases[l].size(); ++i)
            probe(model.biases[l].data() + i, grads.biases[l](i));
    }
    return max_rel;
}

} // namespace

TEST_SUITE("flownet") {

TEST_CASE("initialization shapes, zero biases, empty meta") {
    const FlowMapModel m = init_model(2, 3, {5, 4}, 11);
    CHECK(m.input_dim() == 8);
    REQUIRE(m.n_layers() == 3);
    CHECK(m.weights[0].rows() == 5);
    CHECK(m.weights[0].cols() == 8);
    CHECK(m.weights[1].rows() == 4);
    CHECK(m.weights[1].cols() == 5);
    CHECK(m.weights[2].rows() == 2);
    CHECK(m.weights[2].cols() == 4);
    for (const auto& b : m.biases) CHECK(b.isZero(0.0));
    CHECK(m.meta.epochs == 0);
    CHECK_NOTHROW(validate_model(m));
}

TEST_CASE("he-normal draw statistics match sqrt(2/fan_in)") {
    const FlowMapModel m = init_model(1000, 0, {1000}, 3);
    const auto& w = m.weights[0]; // 1000 x 1000, fan_in 1000
    const double mean = w.mean();
    const double sd = std::sqrt((w.array() - mean).square().mean());
    const double expect = std::sqrt(2.0 / 1000.0);
    CHECK(std::abs(mean) < 3.0 * expect / 1000.0 * 10.0);
    CHECK(sd == doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("initialization is deterministic per seed") {
    const FlowMapModel a = init_model(3, 1, {8, 8}, 42);
    const FlowMapModel b = init_model(3, 1, {8, 8}, 42);
    const FlowMapModel c = init_model(3, 1, {8, 8}, 43);
    CHECK(params_equal(a, b));
    CHECK(!params_equal(a, c));
    CHECK(model_fingerprint(a) == model_fingerprint(b));
    CHECK(model_fingerprint(a) != model_fingerprint(c));
}

TEST_CASE("forward pass hand evaluation with relu clipping") {
    const FlowMapModel m = tiny_model();
    Eigen::MatrixXd window(1, 1);
    window << 2.0;
    // pre-activations (2.5, -1.5) -> relu (2.5, 0) -> 2.5 + 0.25
    const Eigen::VectorXd out = net_forward(m, window);
    CHECK(out(0) == doctest::Approx(2.75).epsilon(1e-15));

    ForwardTape tape;
    forward_batch(m, window, &tape);
    REQUIRE(tape.masks.size() == 1);
    CHECK(tape.masks[0](0, 0) == 1.0);
    CHECK(tape.masks[0](0, 1) == 0.0);
}

TEST_CASE("batched forward equals per-row evaluation") {
    const FlowMapModel m = random_model(2, 1, {7, 5}, 9);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd inputs(6, m.input_dim());
    for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs(i) = nd(rng);
    const Eigen::MatrixXd batch_out = forward_batch(m, inputs);
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        // rebuild the window (oldest-first rows) from the flattened layout
        Eigen::MatrixXd window(m.memory_len + 1, m.obs_dim);
        for (int j = 0; j <= m.memory_len; ++j)
            window.row(j) = inputs.row(r).segment(j * m.obs_dim, m.obs_dim);
        const Eigen::VectorXd single = net_forward(m, window);
        CHECK((batch_out.row(r).transpose() - single).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("rollout composes the residual map and shifts the memory window") {
    const FlowMapModel m = random_model(2, 1, {6}, 21);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd window(2, 2);
    for (Eigen::Index i = 0; i < window.size(); ++i) window(i) = nd(rng);

    const int K = 4;
    const Eigen::MatrixXd rolled = recurrent_rollout(m, window, K);
    REQUIRE(rolled.rows() == K);

    Eigen::MatrixXd w = window;
    for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd z = w.row(1).transpose() + net_forward(m, w);
        CHECK((rolled.row(k).transpose() - z).cwiseAbs().maxCoeff() == 0.0);
        w.row(0) = w.row(1);
        w.row(1) = z.transpose();
    }
}

TEST_CASE("a memoryless model is a plain residual step") {
    const FlowMapModel m = random_model(3, 0, {10, 10}, 5);
    Eigen::MatrixXd window(1, 3);
    window << 0.3, -1.2, 0.8;
    const int K = 6;
    const Eigen::MatrixXd rolled = recurrent_rollout(m, window, K);
    Eigen::VectorXd z = window.row(0).transpose();
    for (int k = 0; k < K; ++k) {
        Eigen::MatrixXd w = z.transpose();
        z = z + net_forward(m, w);
        CHECK((rolled.row(k).transpose() - z).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("recurrent loss is the batch mean of summed squared step errors") {
    const FlowMapModel m = random_model(2, 1, {5}, 33);
    const auto batch = random_batch(2, 1, 3, 4, 17);
    double expect = 0.0;
    for (const auto& seq : batch) {
        const Eigen::MatrixXd pred = recurrent_rollout(m, seq.topRows(2), 3);
        expect += (seq.bottomRows(3) - pred).squaredNorm();
    }
    expect /= static_cast<double>(batch.size());
    CHECK(recurrent_loss(m, batch) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("analytic gradient matches finite differences") {
    const std::vector<int> hidden = {6, 5};
    FlowMapModel m = random_model(2, 2, hidden, 100);
    const auto batch = random_batch(2, 2, 4, 3, 200);
    CHECK(fd_rel_error(m, batch) < 1e-7);

    FlowMapModel m0 = random_model(3, 0, {4}, 101);
    const auto batch0 = random_batch(3, 0, 2, 2, 201);
    CHECK(fd_rel_error(m0, batch0) < 1e-7);
}

TEST_CASE("gradient is invariant to batch order") {
    const FlowMapModel m = random_model(2, 1, {6}, 55);
    auto batch = random_batch(2, 1, 3, 5, 66);
    const ModelGrads g1 = loss_gradient(m, batch);
    std::reverse(batch.begin(), batch.end());
    const ModelGrads g2 = loss_gradient(m, batch);
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        CHECK((g1.weights[l] - g2.weights[l]).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((g1.biases[l] - g2.biases[l]).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("first adam update moves each parameter by about lr against the gradient") {
    FlowMapModel m = random_model(1, 0, {3}, 8);
    const FlowMapModel before = m;
    ModelGrads g = zero_grads(m);
    for (auto& w : g.weights) w.setConstant(2.0);
    for (auto& b : g.biases) b.setConstant(-3.0);
    AdamState state = make_adam_state(m);
    adam_step(m, g, state, 1e-3);
    CHECK(state.step == 1);
    for (std::size_t l = 0; l < m.n_layers(); ++l) {
        // bias-corrected first step: delta = lr * g / (|g| + eps)
        const Eigen::MatrixXd dw = before.weights[l] - m.weights[l];
        CHECK((dw.array() - 1e-3 * 2.0 / (2.0 + 1e-8)).abs().maxCoeff() < 1e-12);
        const Eigen::VectorXd db = before.biases[l] - m.biases[l];
        CHECK((db.array() + 1e-3 * 3.0 / (3.0 + 1e-8)).abs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("one unshuffled epoch with a single batch equals a manual adam step") {
    const Trajectory traj =
        integrate(SystemSpec{}, Eigen::Vector3d(1.0, 1.0, 1.0), 0.01, 400, 2);
    DatasetSpec dspec;
    dspec.m_sequences = 8;
    dspec.memory_len = 1;
    dspec.recurrent_len = 4;
    dspec.seed = 3;
    const SequenceDataset data = sample_sequences(traj, dspec);

    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.recurrent_len = 4;
    cfg.seed = 4;
    cfg.shuffle = false;

    FlowMapModel trained = init_model(3, 1, {10}, cfg.seed);
    const TrainResult res = train(trained, data, cfg);

    FlowMapModel manual = init_model(3, 1, {10}, cfg.seed);
    double loss = 0.0;
    const ModelGrads g = loss_gradient(manual, data.sequences, &loss);
    AdamState state = make_adam_state(manual);
    adam_step(manual, g, state, cfg.learning_rate);

    CHECK(params_equal(trained, manual));
    REQUIRE(res.epoch_loss.size() == 1);
    CHECK(res.epoch_loss[0] == loss);
}

TEST_CASE("training reduces the loss on a short lorenz trajectory") {
    const Trajectory traj =
        integrate(SystemSpec{}, Eigen::Vector3d(1.0, 1.0, 1.0), 0.01, 1000, 2);
    DatasetSpec dspec;
    dspec.m_sequences = 64;
    dspec.memory_len = 0;
    dspec.recurrent_len = 5;
    dspec.seed = 12;
    const SequenceDataset data = sample_sequences(traj, dspec);
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 16;
    cfg.recurrent_len = 5;
    cfg.seed = 13;
    FlowMapModel m = init_model(3, 0, {16, 16}, cfg.seed);
    const TrainResult res = train(m, data, cfg);
    CHECK(res.epoch_loss.back() < 0.1 * res.epoch_loss.front());
    CHECK(m.meta.epochs == 40);
    CHECK(m.meta.dt == traj.dt);
    CHECK(m.meta.dataset_fingerprint == dataset_fingerprint(data));
}

TEST_CASE("training rejects incompatible dataset geometry") {
    const Trajectory traj =
        integrate(SystemSpec{}, Eigen::Vector3d(1.0, 1.0, 1.0), 0.01, 200, 2);
    DatasetSpec dspec;
    dspec.m_sequences = 4;
    dspec.memory_len = 2;
    dspec.recurrent_len = 3;
    const SequenceDataset data = sample_sequences(traj, dspec);
    TrainConfig cfg;
    cfg.recurrent_len = 3;
    cfg.batch_size = 2;
    FlowMapModel wrong_mem = init_model(3, 1, {4}, 0);
    CHECK_THROWS_AS(train(wrong_mem, data, cfg), BadInputShape);
    FlowMapModel wrong_k = init_model(3, 2, {4}, 0);
    TrainConfig bad_k = cfg;
    bad_k.recurrent_len = 2;
    CHECK_THROWS_AS(train(wrong_k, data, bad_k), BadInputShape);
}

TEST_CASE("exploding optimization reports the diverging epoch and batch") {
    const Trajectory traj =
        integrate(SystemSpec{}, Eigen::Vector3d(1.0, 1.0, 1.0), 0.01, 300, 2);
    DatasetSpec dspec;
    dspec.m_sequences = 16;
    dspec.memory_len = 0;
    dspec.recurrent_len = 8;
    const SequenceDataset data = sample_sequences(traj, dspec);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.recurrent_len = 8;
    FlowMapModel m = init_model(3, 0, {12}, 1);
    // overflow is reached after two compositions of the poisoned layer
    m.biases[0].setConstant(1e200);
    try {
        train(m, data, cfg);
        FAIL("expected TrainingDiverged");
    } catch (const TrainingDiverged& e) {
        CHECK(e.epoch == 0);
        CHECK(e.batch == 0);
    }
}

TEST_CASE("checkpoint round-trip is bit-exact including metadata") {
    FlowMapModel m = random_model(2, 3, {9, 7}, 77);
    m.meta.dt = 0.01;
    m.meta.dataset_fingerprint = 0xdeadbeefcafe1234ull;
    m.meta.epochs = 123;
    m.meta.seed = 77;
    Normalization norm;
    norm.center = Eigen::Vector2d(1.5, -2.5);
    norm.scale = Eigen::Vector2d(3.0, 0.5);
    m.meta.normalization = norm;

    testutil::TempDir dir("ckpt");
    const auto p = dir.path / "m.cfnn";
    save_checkpoint(m, p);
    {
        std::ifstream is(p, std::ios::binary);
        char magic[4];
        is.read(magic, 4);
        CHECK(std::string(magic, 4) == "CFNN");
    }
    const FlowMapModel r = load_checkpoint(p);
    CHECK(r.obs_dim == m.obs_dim);
    CHECK(r.memory_len == m.memory_len);
    CHECK(r.hidden_layers == m.hidden_layers);
    CHECK(params_equal(r, m));
    CHECK(r.meta.dt == m.meta.dt);
    CHECK(r.meta.dataset_fingerprint == m.meta.dataset_fingerprint);
    CHECK(r.meta.epochs == m.meta.epochs);
    CHECK(r.meta.seed == m.meta.seed);
    REQUIRE(r.meta.normalization.has_value());
    CHECK(r.meta.normalization->center == norm.center);
    CHECK(r.meta.normalization->scale == norm.scale);
    CHECK(model_fingerprint(r) == model_fingerprint(m));

    // identical bytes when written again
    const auto p2 = dir.path / "m2.cfnn";
    save_checkpoint(r, p2);
    std::ifstream a(p, std::ios::binary), b(p2, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}

TEST_CASE("corrupted parameter blob is rejected on load") {
    const FlowMapModel m = random_model(1, 0, {3}, 2);
    testutil::TempDir dir("ckpt_bad");
    const auto p = dir.path / "m.cfnn";
    save_checkpoint(m, p);
    // patch the first blob value to NaN: magic(4) + header_len(8) + header
    std::uint64_t header_len = 0;
    {
        std::ifstream is(p, std::ios::binary);
        is.seekg(4);
        is.read(reinterpret_cast<char*>(&header_len), 8);
    }
    {
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(static_cast<std::streamoff>(12 + header_len));
        const std::uint64_t nan_bits = 0x7ff8000000000000ull;
        f.write(reinterpret_cast<const char*>(&nan_bits), 8);
    }
    CHECK_THROWS_AS(load_checkpoint(p), FormatError);
}

TEST_CASE("fingerprint covers parameters but not metadata") {
    FlowMapModel m = random_model(2, 0, {4}, 10);
    const auto fp = model_fingerprint(m);
    m.meta.epochs += 500;
    m.meta.dataset_fingerprint = 1;
    CHECK(model_fingerprint(m) == fp);
    m.weights[0](0, 0) += 1e-14;
    CHECK(model_fingerprint(m) != fp);
}

} // TEST_SUITE
