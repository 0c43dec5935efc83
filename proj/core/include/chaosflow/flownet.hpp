#pragma once

#include "chaosflow/dataset.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chaosflow {

struct ModelMeta {
    double dt = 0.0;
    std::uint64_t dataset_fingerprint = 0;
    std::uint64_t epochs = 0;
    std::uint64_t seed = 0;
    std::optional<Normalization> normalization;
};

// Residual flow map with memory: z_{n+1} = z_n + N(z_{n-n_M}, ..., z_n).
// N is a dense ReLU network whose input is the history window flattened
// oldest-first (slot j holds the state n_M-j steps in the past, j = 0 being
// the oldest); the output is the one-step increment.
struct FlowMapModel {
    int obs_dim = 0;
    int memory_len = 0;
    std::vector<int> hidden_layers;
    std::vector<Eigen::MatrixXd> weights; // layer l: (out_l x in_l)
    std::vector<Eigen::VectorXd> biases;  // layer l: (out_l)
    ModelMeta meta;

    int input_dim() const { return obs_dim * (memory_len + 1); }
    std::size_t n_layers() const { return weights.size(); }
};

// He-normal weights (std = sqrt(2/fan_in)), zero biases, deterministic per
// seed.  Draw order: layer by layer, row-major within each weight matrix.
FlowMapModel init_model(int obs_dim, int memory_len, const std::vector<int>& hidden_layers,
                        std::uint64_t seed);

void validate_model(const FlowMapModel& model);

// Activations recorded by a forward pass for backprop: the input of each
// layer plus the 0/1 ReLU masks of the hidden layers.
struct ForwardTape {
    std::vector<Eigen::MatrixXd> inputs;
    std::vector<Eigen::ArrayXXd> masks;
};

struct ModelGrads {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

ModelGrads zero_grads(const FlowMapModel& model);

// Batched network evaluation: each row of `inputs` is one flattened window;
// returns one increment row per input row.
Eigen::MatrixXd forward_batch(const FlowMapModel& model, const Eigen::MatrixXd& inputs,
                              ForwardTape* tape = nullptr);

// Single-window convenience wrapper: window is (n_M+1) x m, oldest first.
Eigen::VectorXd net_forward(const FlowMapModel& model, const Eigen::MatrixXd& window,
                            ForwardTape* tape = nullptr);

// K recursive applications, shifting the window by one state each step.
// Returns K x m predicted states; throws DivergedRollout on non-finite
// output (callers that prefer truncation handle that themselves).
Eigen::MatrixXd recurrent_rollout(const FlowMapModel& model, const Eigen::MatrixXd& window,
                                  int K);

// Training loss over a batch of sequences, each (n_M+K+1) x m: mean over the
// batch of the error summed over the K composed predictions.
double recurrent_loss(const FlowMapModel& model, std::span<const Eigen::MatrixXd> batch);

// Exact gradient of recurrent_loss.  Backpropagates through all K
// compositions and through the window shifts (each predicted state feeds up
// to n_M+1 later network inputs).
ModelGrads loss_gradient(const FlowMapModel& model, std::span<const Eigen::MatrixXd> batch,
                         double* loss_out = nullptr);

struct AdamState {
    std::size_t step = 0;
    std::vector<Eigen::MatrixXd> m_weights, v_weights;
    std::vector<Eigen::VectorXd> m_biases, v_biases;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

AdamState make_adam_state(const FlowMapModel& model);

// Standard bias-corrected Adam update, in place.
void adam_step(FlowMapModel& model, const ModelGrads& grads, AdamState& state, double lr);

struct TrainConfig {
    std::size_t epochs = 1;
    std::size_t batch_size = 1;
    double learning_rate = 1e-3;
    int recurrent_len = 1; // K, must match the dataset
    std::uint64_t seed = 0;
    bool shuffle = true;
};

struct TrainResult {
    std::vector<double> epoch_loss; // mean of batch losses within each epoch
};

// Mini-batch Adam for `epochs` passes over the dataset; deterministic per
// seed.  Throws TrainingDiverged when a batch loss goes non-finite.
TrainResult train(FlowMapModel& model, const SequenceDataset& data, const TrainConfig& cfg);

// Content hash of architecture + parameters (metadata excluded).
std::uint64_t model_fingerprint(const FlowMapModel& model);

// Checkpoint carrier: magic "CFNN", JSON header (architecture, meta, input
// ordering convention), then the parameter blob as f64 little-endian in
// layer order, weights row-major then bias per layer.
void save_checkpoint(const FlowMapModel& model, const std::filesystem::path& path);
FlowMapModel load_checkpoint(const std::filesystem::path& path);

} // namespace chaosflow
