#include "chaosflow/pipeline.hpp"
#include "chaosflow/errors.hpp"
#include "chaosflow/hash.hpp"
#include "chaosflow/trajectory.hpp"

#include "test_util.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

using namespace chaosflow;
using nlohmann::json;

namespace {

ExperimentConfig micro() { return load_experiment_config(testutil::preset("micro")); }

StageOptions out_into(const std::filesystem::path& dir) {
    StageOptions opts;
    opts.out_dir = dir;
    return opts;
}

bool mentions(const std::vector<std::string>& violations, const std::string& needle) {
    for (const auto& v : violations)
        if (v.find(needle) != std::string::npos) return true;
    return false;
}

json read_json(const std::filesystem::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    return json::parse(is);
}

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string(CHAOSFLOW_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config canonical form is a fixed point of parse/serialize") {
    const ExperimentConfig a = micro();
    const std::string text = config_to_json_text(a);
    const ExperimentConfig b = config_from_json_text(text);
    CHECK(config_to_json_text(b) == text);
    CHECK(config_hash(a) == config_hash(b));
    CHECK(a.name == "micro");
    CHECK(a.dataset.spec.seed == 42);
    CHECK(a.train.seed == 43);
}

TEST_CASE("unknown system kind and missing fields are config errors") {
    CHECK_THROWS_AS(config_from_json_text(R"({"name":"x","system":{"kind":"rossler"}})"),
                    ConfigInvalid);
    CHECK_THROWS_AS(config_from_json_text(R"({"name":"x"})"), ConfigInvalid);
    CHECK_THROWS_AS(config_from_json_text("not json at all"), ConfigInvalid);
}

TEST_CASE("validation catches cross-field inconsistencies by field path") {
    ExperimentConfig c = micro();
    CHECK(validate_config(c).empty());

    SUBCASE("model and dataset history lengths must agree") {
        c.model.memory_len = 5;
        const auto v = validate_config(c);
        REQUIRE(!v.empty());
        CHECK(mentions(v, "model.memory_len"));
        CHECK(mentions(v, "dataset.memory_len"));
    }
    SUBCASE("training unroll must match the sampled windows") {
        c.train.recurrent_len = 9;
        CHECK(mentions(validate_config(c), "train.recurrent_len"));
    }
    SUBCASE("observation indices must fit the system dimension") {
        c.system.params = Lorenz96Params{40, 8.0, 1.0};
        c.simulate.initial.assign(40, 8.0);
        c.test.initial.assign(40, 8.0);
        c.observation.indices = {0, 1, 40};
        CHECK(mentions(validate_config(c), "observation.indices[2]"));
    }
    SUBCASE("batch size cannot exceed the dataset") {
        c.train.batch_size = 201;
        CHECK(mentions(validate_config(c), "train.batch_size"));
    }
    SUBCASE("windows must fit the simulated span") {
        c.simulate.horizon = 0.05;
        CHECK(mentions(validate_config(c), "simulate.horizon"));
    }
    SUBCASE("run_stage refuses an invalid config") {
        c.train.learning_rate = 0.0;
        testutil::TempDir dir("pipeline");
        CHECK_THROWS_AS(run_stage(c, Stage::Simulate, out_into(dir.path)), ConfigInvalid);
    }
}

TEST_CASE("stage names round-trip and reject junk") {
    for (Stage s : {Stage::Simulate, Stage::MakeDataset, Stage::Train, Stage::Predict,
                    Stage::Evaluate, Stage::Compare})
        CHECK(parse_stage(stage_name(s)) == s);
    CHECK(parse_stage("make-dataset") == Stage::MakeDataset);
    CHECK_THROWS_AS(parse_stage("deploy"), ConfigInvalid);
}

TEST_CASE("simulate stage writes artifacts and a manifest with their hashes") {
    const ExperimentConfig c = micro();
    testutil::TempDir dir("pipeline");
    const StageOutcome outcome = run_stage(c, Stage::Simulate, out_into(dir.path));

    const auto train_path = dir.path / "train.cftj";
    const auto test_path = dir.path / "test.cftj";
    REQUIRE(std::filesystem::exists(train_path));
    REQUIRE(std::filesystem::exists(test_path));

    const json manifest = json::parse(outcome.manifest_json);
    CHECK(manifest.at("stage") == "simulate");
    CHECK(manifest.at("version") == 1);
    CHECK(manifest.at("config_name") == "micro");
    CHECK(manifest.at("config_hash") == hex64(config_hash(c)));
    CHECK(manifest.at("outputs").at("train.cftj") == hex64(hash_file(train_path)));
    CHECK(manifest.at("outputs").at("test.cftj") == hex64(hash_file(test_path)));
    CHECK(manifest.at("train_rows") == 2001);
    CHECK(manifest.at("test_rows") == 601);
    CHECK(manifest.at("wall_time_seconds").get<double>() >= 0.0);

    const json on_disk = read_json(dir.path / "simulate.manifest.json");
    CHECK(on_disk == manifest);

    const Trajectory t = load_trajectory(train_path);
    CHECK(t.rows() == 2001);
    CHECK(t.labels == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("full pipeline produces every artifact and stays bit-stable on rerun") {
    const ExperimentConfig c = micro();
    testutil::TempDir a("pipe_a");
    testutil::TempDir b("pipe_b");
    const auto outcomes_a = run_all(c, out_into(a.path));
    const auto outcomes_b = run_all(c, out_into(b.path));
    REQUIRE(outcomes_a.size() == 6);
    for (const auto& o : outcomes_a) CHECK(!o.rollout_diverged);

    const char* artifacts[] = {
        "train.cftj",       "test.cftj",        "dataset.cfds",     "dataset.cfds.json",
        "model.cfnn",       "train_history.csv", "prediction.cftj", "prediction.json",
        "report_ref.json",  "report_pred.json", "comparison.json",  "pointwise_error.csv",
        "simulate.manifest.json", "make-dataset.manifest.json", "train.manifest.json",
        "predict.manifest.json",  "evaluate.manifest.json",     "compare.manifest.json",
    };
    for (const char* name : artifacts) {
        CAPTURE(name);
        CHECK(std::filesystem::exists(a.path / name));
    }
    // one diagnostics bundle per report
    for (const char* stem : {"acf_", "hist_", "corrdim_", "lyap_", "lambda_"}) {
        CHECK(std::filesystem::exists(a.path / (stem + std::string("ref.csv"))));
        CHECK(std::filesystem::exists(a.path / (stem + std::string("pred.csv"))));
    }

    // determinism: all content artifacts identical across the two runs
    const char* stable[] = {"train.cftj",      "test.cftj",       "dataset.cfds",
                            "model.cfnn",      "train_history.csv", "prediction.cftj",
                            "report_ref.json", "report_pred.json", "comparison.json"};
    for (const char* name : stable) {
        CAPTURE(name);
        CHECK(hash_file(a.path / name) == hash_file(b.path / name));
    }

    const json cmp = read_json(a.path / "comparison.json");
    CHECK(cmp.at("format") == "chaosflow-comparison");
    CHECK(cmp.at("metrics").is_array());
    CHECK(cmp.at("rollout_diverged") == false);
    CHECK(cmp.at("stability").at("pass").is_boolean());
}

TEST_CASE("stages demand their upstream artifacts") {
    const ExperimentConfig c = micro();
    testutil::TempDir dir("pipeline");
    CHECK_THROWS_AS(run_stage(c, Stage::MakeDataset, out_into(dir.path)), UpstreamMissing);
    CHECK_THROWS_AS(run_stage(c, Stage::Train, out_into(dir.path)), UpstreamMissing);
    CHECK_THROWS_AS(run_stage(c, Stage::Compare, out_into(dir.path)), UpstreamMissing);
}

TEST_CASE("a tampered upstream artifact is rejected against its manifest") {
    const ExperimentConfig c = micro();
    testutil::TempDir dir("pipeline");
    run_stage(c, Stage::Simulate, out_into(dir.path));
    run_stage(c, Stage::MakeDataset, out_into(dir.path));

    const auto ds = dir.path / "dataset.cfds";
    auto bytes = [&] {
        std::ifstream is(ds, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), {});
    }();
    bytes[bytes.size() / 2] ^= 0x01;
    std::ofstream(ds, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));

    CHECK_THROWS_AS(run_stage(c, Stage::Train, out_into(dir.path)), FingerprintMismatch);
}

TEST_CASE("the seed override rewires dataset and training seeds together") {
    const ExperimentConfig c = micro();
    testutil::TempDir dir("pipeline");
    StageOptions opts = out_into(dir.path);
    opts.seed_override = 777;
    run_stage(c, Stage::Simulate, opts);
    run_stage(c, Stage::MakeDataset, opts);
    run_stage(c, Stage::Train, opts);

    const SequenceDataset data = load_dataset(dir.path / "dataset.cfds");
    CHECK(data.spec.seed == 777);
    const FlowMapModel model = load_checkpoint(dir.path / "model.cfnn");
    CHECK(model.meta.seed == 778);
}

TEST_CASE("command line: exit codes for success, bad config and missing upstream") {
    testutil::TempDir dir("pipeline");
    const std::string cfg = testutil::preset("micro").string();

    CHECK(run_cli("run-all --config " + cfg + " --out " + (dir.path / "all").string()) == 0);
    CHECK(std::filesystem::exists(dir.path / "all" / "comparison.json"));

    const auto bad = dir.path / "bad.json";
    std::ofstream(bad) << R"({"name":"broken"})";
    CHECK(run_cli("simulate --config " + bad.string() + " --out " +
                  (dir.path / "x").string()) == 2);

    CHECK(run_cli("train --config " + cfg + " --out " + (dir.path / "empty").string()) == 3);
}

} // TEST_SUITE
