#include "chaosflow/errors.hpp"
#include "chaosflow/rollout.hpp"

#include <doctest.h>

#include <random>

using namespace chaosflow;

namespace {

FlowMapModel seeded_model(int obs_dim, int memory_len, std::uint64_t seed) {
    return init_model(obs_dim, memory_len, {6, 6}, seed);
}

} // namespace

TEST_SUITE("rollout") {

TEST_CASE("prediction starts with the seed rows verbatim and marches n steps") {
    const FlowMapModel m = seeded_model(2, 2, 31);
    Eigen::MatrixXd seed(3, 2);
    seed << 0.1, -0.2, 0.3, 0.4, -0.5, 0.6;
    const PredictionRun run = predict(m, seed, 7, 0.01, 1.5, {"a", "b"});
    CHECK(!run.diverged_at.has_value());
    REQUIRE(run.predicted.rows() == 10);
    CHECK(run.predicted.states.topRows(3) == seed);
    CHECK(run.predicted.dt == 0.01);
    CHECK(run.predicted.t0 == 1.5);
    CHECK(run.predicted.labels == std::vector<std::string>{"a", "b"});
    CHECK(run.model_fingerprint == model_fingerprint(m));

    // forward rows reproduce manual residual composition
    Eigen::MatrixXd w = seed;
    for (int k = 0; k < 7; ++k) {
        const Eigen::VectorXd z = w.row(2).transpose() + net_forward(m, w);
        CHECK((run.predicted.states.row(3 + k).transpose() - z).cwiseAbs().maxCoeff() == 0.0);
        w.topRows(2) = w.bottomRows(2).eval();
        w.row(2) = z.transpose();
    }
}

TEST_CASE("default channel labels are c0..cN") {
    const FlowMapModel m = seeded_model(3, 0, 5);
    const PredictionRun run = predict(m, Eigen::MatrixXd::Zero(1, 3), 2, 0.5);
    CHECK(run.predicted.labels == std::vector<std::string>{"c0", "c1", "c2"});
    CHECK(run.predicted.t0 == 0.0);
}

TEST_CASE("a blowing-up model truncates the run and records the step") {
    FlowMapModel m = seeded_model(2, 0, 8);
    for (auto& w : m.weights) w.setConstant(1.0);
    m.biases[0].setConstant(1e300); // state gains roughly x13 per step from 6e300
    const PredictionRun run = predict(m, Eigen::MatrixXd::Zero(1, 2), 100, 0.01);
    REQUIRE(run.diverged_at.has_value());
    CHECK(*run.diverged_at > 1);
    CHECK(*run.diverged_at < 20);
    CHECK(run.predicted.rows() == 1 + static_cast<Eigen::Index>(*run.diverged_at) - 1);
    CHECK(run.predicted.states.allFinite());

    FlowMapModel inst = seeded_model(2, 0, 9);
    for (auto& w : inst.weights) w.setConstant(1e200);
    inst.biases[0].setConstant(1e200); // overflows inside the first evaluation
    const PredictionRun first = predict(inst, Eigen::MatrixXd::Zero(1, 2), 10, 0.01);
    REQUIRE(first.diverged_at.has_value());
    CHECK(*first.diverged_at == 1);
    CHECK(first.predicted.rows() == 1); // only the seed row survives
}

TEST_CASE("prediction rejects invalid seed geometry") {
    const FlowMapModel m = seeded_model(2, 2, 3);
    CHECK_THROWS_AS(predict(m, Eigen::MatrixXd::Zero(2, 2), 5, 0.01), BadInputShape);
    CHECK_THROWS_AS(predict(m, Eigen::MatrixXd::Zero(3, 3), 5, 0.01), BadInputShape);
    CHECK_THROWS_AS(predict(m, Eigen::MatrixXd::Zero(3, 2), 5, 0.0), BadInputShape);
    CHECK_THROWS_AS(predict(m, Eigen::MatrixXd::Zero(3, 2), 5, 0.01, 0.0, {"one"}),
                    BadInputShape);
}

TEST_CASE("pointwise log error floors at -16 and uses the overlapping rows") {
    Trajectory a;
    a.dt = 0.01;
    a.labels = {"u"};
    a.states = Eigen::MatrixXd::Zero(5, 1);
    Trajectory b = a;
    b.states.resize(3, 1);
    b.states << 0.0, 1e-3, 10.0;
    const Eigen::MatrixXd err = pointwise_log_abs_error(b, a);
    REQUIRE(err.rows() == 3);
    CHECK(err(0, 0) == -16.0);
    CHECK(err(1, 0) == doctest::Approx(-3.0).epsilon(1e-12));
    CHECK(err(2, 0) == doctest::Approx(1.0).epsilon(1e-12));

    Trajectory c = a;
    c.dt = 0.02;
    CHECK_THROWS_AS(pointwise_log_abs_error(c, a), BadInputShape);
    Trajectory d = a;
    d.states.resize(5, 2);
    d.states.setZero();
    d.labels = {"u", "v"};
    CHECK_THROWS_AS(pointwise_log_abs_error(d, a), BadInputShape);
}

TEST_CASE("envelope captures per-coordinate absolute bounds") {
    Trajectory t;
    t.dt = 1.0;
    t.labels = {"u", "v"};
    t.states.resize(3, 2);
    t.states << 1.0, -8.0, -3.0, 2.0, 2.5, 7.0;
    const Envelope env = trajectory_envelope(t);
    CHECK(env.abs_max(0) == 3.0);
    CHECK(env.abs_max(1) == 8.0);

    CHECK(within_envelope(t, env, 1.0));
    Trajectory beyond = t;
    beyond.states(0, 0) = 4.4;
    CHECK(!within_envelope(beyond, env, 1.0));
    CHECK(within_envelope(beyond, env, 1.5));
}

TEST_CASE("seed window extraction takes the first memory_len+1 rows") {
    Trajectory t;
    t.dt = 0.01;
    t.labels = {"u"};
    t.states.resize(4, 1);
    t.states << 1.0, 2.0, 3.0, 4.0;
    const Eigen::MatrixXd w = seed_window_from(t, 2);
    REQUIRE(w.rows() == 3);
    CHECK(w(0, 0) == 1.0);
    CHECK(w(2, 0) == 3.0);
    CHECK_THROWS_AS(seed_window_from(t, 4), InsufficientData);
}

} // TEST_SUITE
