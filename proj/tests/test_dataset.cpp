#include "chaosflow/dataset.hpp"
#include "chaosflow/dynamics.hpp"
#include "chaosflow/errors.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <random>

using namespace chaosflow;

namespace {

Trajectory short_l63() {
    static const Trajectory t = integrate(SystemSpec{}, Eigen::Vector3d(1.0, 1.0, 1.0), 0.01, 500, 2);
    return t;
}

} // namespace

TEST_SUITE("dataset") {

TEST_CASE("projection keeps the requested channels and labels") {
    const Trajectory t = short_l63();
    ObservationSpec obs;
    obs.indices = {0, 2};
    const Trajectory p = project_observed(t, obs);
    CHECK(p.dim() == 2);
    CHECK(p.labels == std::vector<std::string>{"x", "z"});
    CHECK(p.dt == t.dt);
    CHECK(p.states.col(0) == t.states.col(0));
    CHECK(p.states.col(1) == t.states.col(2));
}

TEST_CASE("projection rejects bad index lists") {
    const Trajectory t = short_l63();
    ObservationSpec out_of_range;
    out_of_range.indices = {0, 3};
    CHECK_THROWS_AS(project_observed(t, out_of_range), BadObservation);
    ObservationSpec not_increasing;
    not_increasing.indices = {1, 1};
    CHECK_THROWS_AS(project_observed(t, not_increasing), BadInputShape);
    ObservationSpec negative;
    negative.indices = {-1};
    CHECK_THROWS_AS(project_observed(t, negative), BadObservation);
}

TEST_CASE("window sampling draws verbatim slices from the seeded generator") {
    const Trajectory t = short_l63();
    DatasetSpec spec;
    spec.m_sequences = 25;
    spec.memory_len = 3;
    spec.recurrent_len = 4;
    spec.seed = 2024;
    const SequenceDataset ds = sample_sequences(t, spec);
    REQUIRE(ds.sequences.size() == 25);
    CHECK(ds.obs_dim == 3);
    CHECK(ds.dt == t.dt);
    CHECK(ds.source_fingerprint == trajectory_fingerprint(t));
    CHECK(!ds.normalization.has_value());

    // the documented draw: one uniform start per window, in index order
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::int64_t> pick(
        0, t.rows() - spec.window_len());
    for (const auto& seq : ds.sequences) {
        const auto start = pick(rng);
        REQUIRE(seq.rows() == spec.window_len());
        CHECK(seq == t.states.middleRows(start, spec.window_len()));
    }
}

TEST_CASE("sampling is deterministic per seed") {
    const Trajectory t = short_l63();
    DatasetSpec spec;
    spec.m_sequences = 10;
    spec.memory_len = 0;
    spec.recurrent_len = 5;
    spec.seed = 7;
    const auto a = sample_sequences(t, spec);
    const auto b = sample_sequences(t, spec);
    CHECK(dataset_fingerprint(a) == dataset_fingerprint(b));
    spec.seed = 8;
    const auto c = sample_sequences(t, spec);
    CHECK(dataset_fingerprint(a) != dataset_fingerprint(c));
}

TEST_CASE("windows longer than the source are rejected") {
    const Trajectory t = short_l63();
    DatasetSpec spec;
    spec.m_sequences = 1;
    spec.memory_len = 300;
    spec.recurrent_len = 300;
    CHECK_THROWS_AS(sample_sequences(t, spec), InsufficientData);
}

TEST_CASE("normalization removes the full-source column statistics") {
    const Trajectory t = short_l63();
    DatasetSpec spec;
    spec.m_sequences = 40;
    spec.memory_len = 2;
    spec.recurrent_len = 6;
    spec.seed = 5;
    const SequenceDataset ds = sample_sequences(t, spec, true);
    REQUIRE(ds.normalization.has_value());
    const auto& norm = *ds.normalization;
    for (int c = 0; c < 3; ++c) {
        const double mean = t.states.col(c).mean();
        const double var = (t.states.col(c).array() - mean).square().mean();
        CHECK(norm.center(c) == doctest::Approx(mean).epsilon(1e-14));
        CHECK(norm.scale(c) == doctest::Approx(std::sqrt(var)).epsilon(1e-14));
    }
    // windows are normalized slices
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::int64_t> pick(0, t.rows() - spec.window_len());
    const auto start = pick(rng);
    Eigen::MatrixXd expect = t.states.middleRows(start, spec.window_len());
    for (Eigen::Index r = 0; r < expect.rows(); ++r)
        expect.row(r) = (expect.row(r).transpose() - norm.center)
                            .cwiseQuotient(norm.scale)
                            .transpose();
    CHECK((ds.sequences[0] - expect).cwiseAbs().maxCoeff() < 1e-14);

    // apply/invert are inverses
    Eigen::VectorXd v(3);
    v << 3.0, -12.0, 30.0;
    const Eigen::VectorXd back = invert_normalization(norm, apply_normalization(norm, v));
    CHECK((back - v).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dataset files round-trip bit-exactly with a JSON sidecar") {
    const Trajectory t = short_l63();
    DatasetSpec spec;
    spec.m_sequences = 12;
    spec.memory_len = 1;
    spec.recurrent_len = 3;
    spec.seed = 77;
    const SequenceDataset ds = sample_sequences(t, spec, true);

    testutil::TempDir dir("dataset_io");
    const auto p = dir.path / "d.cfds";
    save_dataset(ds, p);
    REQUIRE(std::filesystem::exists(p));
    REQUIRE(std::filesystem::exists(dir.path / "d.cfds.json"));

    const SequenceDataset r = load_dataset(p);
    CHECK(r.spec.m_sequences == ds.spec.m_sequences);
    CHECK(r.spec.memory_len == ds.spec.memory_len);
    CHECK(r.spec.recurrent_len == ds.spec.recurrent_len);
    CHECK(r.spec.seed == ds.spec.seed);
    CHECK(r.obs_dim == ds.obs_dim);
    CHECK(r.dt == ds.dt);
    CHECK(r.source_fingerprint == ds.source_fingerprint);
    REQUIRE(r.normalization.has_value());
    CHECK(r.normalization->center == ds.normalization->center);
    CHECK(r.normalization->scale == ds.normalization->scale);
    REQUIRE(r.sequences.size() == ds.sequences.size());
    for (std::size_t i = 0; i < r.sequences.size(); ++i)
        CHECK(r.sequences[i] == ds.sequences[i]);
    CHECK(dataset_fingerprint(r) == dataset_fingerprint(ds));

    std::ifstream is(dir.path / "d.cfds.json");
    const auto sidecar = nlohmann::json::parse(std::string(
        (std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>()));
    CHECK(sidecar["format"] == "chaosflow-dataset");
    CHECK(sidecar.contains("fingerprint"));
}

TEST_CASE("fingerprint reacts to any payload change") {
    const Trajectory t = short_l63();
    DatasetSpec spec;
    spec.m_sequences = 4;
    spec.memory_len = 0;
    spec.recurrent_len = 2;
    SequenceDataset ds = sample_sequences(t, spec);
    const auto fp = dataset_fingerprint(ds);
    ds.sequences[2](1, 1) += 1e-12;
    CHECK(dataset_fingerprint(ds) != fp);
}

} // TEST_SUITE
