#pragma once

#include "chaosflow/chaostats.hpp"
#include "chaosflow/dataset.hpp"
#include "chaosflow/dynamics.hpp"
#include "chaosflow/flownet.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace chaosflow {

struct SimulateSection {
    double dt = 0.01;
    double horizon = 1.0; // seconds; steps = round(horizon/dt)
    std::vector<double> initial;
    int substeps = 10;
};

struct TestSection {
    std::vector<double> initial;
    double horizon = 1.0;
};

struct ModelSection {
    std::vector<int> hidden_layers;
    int memory_len = 0; // must agree with dataset.memory_len
};

struct DatasetSection {
    DatasetSpec spec;
    bool normalize = false;
};

struct ExperimentConfig {
    std::string name;
    int version = 1;
    SystemSpec system;
    ObservationSpec observation;
    SimulateSection simulate;
    DatasetSection dataset;
    ModelSection model;
    TrainConfig train;
    TestSection test;
    MetricsConfig metrics;
};

ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& config);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Every cross-field invariant, checked up front; each violation names the
// offending field path(s).  Empty result means the config is runnable.
std::vector<std::string> validate_config(const ExperimentConfig& config);

// Hash of the canonical JSON form; recorded in every stage manifest.
std::uint64_t config_hash(const ExperimentConfig& config);

enum class Stage { Simulate, MakeDataset, Train, Predict, Evaluate, Compare };

Stage parse_stage(const std::string& name);
std::string stage_name(Stage stage);

struct StageOptions {
    std::filesystem::path out_dir;
    std::filesystem::path stage_in; // where upstream artifacts live; defaults to out_dir
    std::optional<std::uint64_t> seed_override; // dataset.seed = s, train.seed = s+1
    std::optional<std::size_t> threads;
};

struct StageOutcome {
    std::string manifest_json;
    bool rollout_diverged = false;
};

// Runs one stage: validates the config, verifies upstream artifact
// fingerprints against their producers' manifests (when present), writes all
// outputs atomically (temp + rename) and a <stage>.manifest.json recording
// config hash, input fingerprints, output hashes and wall time.
StageOutcome run_stage(const ExperimentConfig& config, Stage stage, const StageOptions& opts);

// simulate → make-dataset → train → predict → evaluate → compare, feeding
// each stage from the output directory.
std::vector<StageOutcome> run_all(const ExperimentConfig& config, const StageOptions& opts);

} // namespace chaosflow
