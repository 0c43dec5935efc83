#include "chaosflow/flownet.hpp"

#include "chaosflow/errors.hpp"
#include "chaosflow/hash.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace chaosflow {

namespace {

std::vector<int> layer_widths(int obs_dim, int memory_len, const std::vector<int>& hidden) {
    std::vector<int> widths;
    widths.push_back(obs_dim * (memory_len + 1));
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(obs_dim);
    return widths;
}

} // namespace

FlowMapModel init_model(int obs_dim, int memory_len, const std::vector<int>& hidden_layers,
                        std::uint64_t seed) {
    if (obs_dim < 1) throw BadInputShape("init_model: obs_dim must be >= 1");
    if (memory_len < 0) throw BadInputShape("init_model: memory_len must be >= 0");
    for (int w : hidden_layers)
        if (w < 1) throw BadInputShape("init_model: hidden widths must be >= 1");

    FlowMapModel model;
    model.obs_dim = obs_dim;
    model.memory_len = memory_len;
    model.hidden_layers = hidden_layers;

    const auto widths = layer_widths(obs_dim, memory_len, hidden_layers);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int fan_in = widths[l];
        const int fan_out = widths[l + 1];
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int r = 0; r < fan_out; ++r)
            for (int c = 0; c < fan_in; ++c) w(r, c) = std_dev * unit(rng);
        model.weights.push_back(std::move(w));
        model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return model;
}

void validate_model(const FlowMapModel& model) {
    const auto widths = layer_widths(model.obs_dim, model.memory_len, model.hidden_layers);
    if (model.weights.size() != widths.size() - 1 || model.biases.size() != widths.size() - 1)
        throw BadInputShape("model layer count inconsistent with architecture");
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        if (model.weights[l].rows() != widths[l + 1] || model.weights[l].cols() != widths[l])
            throw BadInputShape("weight matrix " + std::to_string(l) + " has wrong shape");
        if (model.biases[l].size() != widths[l + 1])
            throw BadInputShape("bias vector " + std::to_string(l) + " has wrong shape");
        if (!model.weights[l].allFinite() || !model.biases[l].allFinite())
            throw FormatError("model parameters contain non-finite values");
    }
}

ModelGrads zero_grads(const FlowMapModel& model) {
    ModelGrads g;
    g.weights.reserve(model.n_layers());
    g.biases.reserve(model.n_layers());
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        g.weights.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        g.biases.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
    return g;
}

Eigen::MatrixXd forward_batch(const FlowMapModel& model, const Eigen::MatrixXd& inputs,
                              ForwardTape* tape) {
    if (inputs.cols() != model.input_dim())
        throw BadInputShape("forward: input has " + std::to_string(inputs.cols()) +
                            " columns, model expects " + std::to_string(model.input_dim()));
    const std::size_t n = model.n_layers();
    if (tape) {
        tape->inputs.assign(n, {});
        tape->masks.assign(n > 0 ? n - 1 : 0, {});
    }
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l + 1 < n; ++l) {
        if (tape) tape->inputs[l] = a;
        Eigen::MatrixXd pre = (a * model.weights[l].transpose()).rowwise() +
                              model.biases[l].transpose();
        if (tape) tape->masks[l] = (pre.array() > 0.0).cast<double>();
        a = pre.cwiseMax(0.0);
    }
    if (tape) tape->inputs[n - 1] = a;
    return (a * model.weights[n - 1].transpose()).rowwise() + model.biases[n - 1].transpose();
}

namespace {

// out_grad is d(loss)/d(output), shape (B x m).  Parameter gradients are
// accumulated into `grads`; returns d(loss)/d(input), shape (B x input_dim).
Eigen::MatrixXd backward_batch(const FlowMapModel& model, const ForwardTape& tape,
                               const Eigen::MatrixXd& out_grad, ModelGrads& grads) {
    const std::size_t n = model.n_layers();
    Eigen::MatrixXd d_pre = out_grad;
    for (std::size_t l = n; l-- > 0;) {
        grads.weights[l].noalias() += d_pre.transpose() * tape.inputs[l];
        grads.biases[l] += d_pre.colwise().sum().transpose();
        Eigen::MatrixXd d_in = d_pre * model.weights[l];
        if (l == 0) return d_in;
        d_pre = d_in.array() * tape.masks[l - 1];
    }
    return out_grad; // unreachable: n >= 1 always
}

Eigen::VectorXd flatten_window(const Eigen::MatrixXd& window) {
    Eigen::VectorXd flat(window.size());
    const Eigen::Index m = window.cols();
    for (Eigen::Index j = 0; j < window.rows(); ++j)
        flat.segment(j * m, m) = window.row(j).transpose();
    return flat;
}

void check_window(const FlowMapModel& model, const Eigen::MatrixXd& window) {
    if (window.rows() != model.memory_len + 1 || window.cols() != model.obs_dim)
        throw BadInputShape("window must be (memory_len+1) x obs_dim = (" +
                            std::to_string(model.memory_len + 1) + " x " +
                            std::to_string(model.obs_dim) + "), got (" +
                            std::to_string(window.rows()) + " x " +
                            std::to_string(window.cols()) + ")");
}

struct BatchRollout {
    double loss = 0.0;
    std::vector<Eigen::MatrixXd> predictions; // K entries, each B x m
    std::vector<Eigen::MatrixXd> targets;     // K entries, each B x m
    std::vector<ForwardTape> tapes;           // K entries (when taping)
};

// Shared forward machinery for recurrent_loss / loss_gradient: composes the
// model K times over a batch of sequences, shifting each window with its own
// predictions.
BatchRollout roll_batch(const FlowMapModel& model,
                        const std::vector<const Eigen::MatrixXd*>& batch, bool with_tape) {
    const int m = model.obs_dim;
    const int n_mem = model.memory_len;
    const auto b_count = static_cast<Eigen::Index>(batch.size());
    if (b_count == 0) throw BadInputShape("empty batch");
    const Eigen::Index rows = batch[0]->rows();
    const int k_total = static_cast<int>(rows) - n_mem - 1;
    if (k_total < 1)
        throw BadInputShape("sequences too short for memory_len " + std::to_string(n_mem));
    for (const auto* seq : batch)
        if (seq->rows() != rows || seq->cols() != m)
            throw BadInputShape("inconsistent sequence shapes in batch");

    Eigen::MatrixXd win(b_count, model.input_dim());
    Eigen::MatrixXd z(b_count, m);
    for (Eigen::Index b = 0; b < b_count; ++b) {
        for (int j = 0; j <= n_mem; ++j) win.block(b, j * m, 1, m) = batch[b]->row(j);
        z.row(b) = batch[b]->row(n_mem);
    }

    BatchRollout out;
    out.predictions.reserve(k_total);
    out.targets.reserve(k_total);
    if (with_tape) out.tapes.resize(k_total);

    for (int k = 1; k <= k_total; ++k) {
        const Eigen::MatrixXd inc =
            forward_batch(model, win, with_tape ? &out.tapes[k - 1] : nullptr);
        z += inc;
        Eigen::MatrixXd target(b_count, m);
        for (Eigen::Index b = 0; b < b_count; ++b) target.row(b) = batch[b]->row(n_mem + k);
        out.loss += (target - z).squaredNorm();
        out.predictions.push_back(z);
        out.targets.push_back(std::move(target));
        if (k < k_total) {
            if (n_mem > 0) win.leftCols(n_mem * m) = win.rightCols(n_mem * m).eval();
            win.rightCols(m) = z;
        }
    }
    out.loss /= static_cast<double>(b_count);
    return out;
}

std::vector<const Eigen::MatrixXd*> to_pointers(std::span<const Eigen::MatrixXd> batch) {
    std::vector<const Eigen::MatrixXd*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& seq : batch) ptrs.push_back(&seq);
    return ptrs;
}

ModelGrads gradient_from_rollout(const FlowMapModel& model,
                                 const std::vector<const Eigen::MatrixXd*>& batch,
                                 BatchRollout& roll) {
    const int m = model.obs_dim;
    const int n_mem = model.memory_len;
    const auto b_count = static_cast<Eigen::Index>(batch.size());
    const int k_total = static_cast<int>(roll.predictions.size());
    const double inv_b = 1.0 / static_cast<double>(b_count);

    ModelGrads grads = zero_grads(model);
    // d(loss)/d(prediction_k), accumulated while walking steps backwards.
    std::vector<Eigen::MatrixXd> d_z(k_total, Eigen::MatrixXd::Zero(b_count, m));
    for (int k = k_total; k >= 1; --k) {
        Eigen::MatrixXd g =
            d_z[k - 1] + 2.0 * inv_b * (roll.predictions[k - 1] - roll.targets[k - 1]);
        if (k >= 2) d_z[k - 2] += g; // identity (residual) path to the previous state
        const Eigen::MatrixXd d_in = backward_batch(model, roll.tapes[k - 1], g, grads);
        // Window slot j of step k held state index k-1-n_mem+j; indices >= 1
        // are earlier predictions and receive gradient through the shift.
        for (int j = 0; j <= n_mem; ++j) {
            const int state_idx = k - 1 - n_mem + j;
            if (state_idx >= 1) d_z[state_idx - 1] += d_in.middleCols(j * m, m);
        }
    }
    return grads;
}

} // namespace

Eigen::VectorXd net_forward(const FlowMapModel& model, const Eigen::MatrixXd& window,
                            ForwardTape* tape) {
    check_window(model, window);
    const Eigen::MatrixXd out = forward_batch(model, flatten_window(window).transpose(), tape);
    return out.row(0).transpose();
}

Eigen::MatrixXd recurrent_rollout(const FlowMapModel& model, const Eigen::MatrixXd& window,
                                  int K) {
    check_window(model, window);
    if (K < 1) throw BadInputShape("recurrent_rollout: K must be >= 1");
    const int m = model.obs_dim;
    Eigen::MatrixXd win = window;
    Eigen::MatrixXd out(K, m);
    for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd z = win.row(win.rows() - 1).transpose() + net_forward(model, win);
        if (!z.allFinite()) throw DivergedRollout(static_cast<std::size_t>(k + 1));
        out.row(k) = z.transpose();
        if (model.memory_len > 0) win.topRows(model.memory_len) = win.bottomRows(model.memory_len).eval();
        win.row(win.rows() - 1) = z.transpose();
    }
    return out;
}

double recurrent_loss(const FlowMapModel& model, std::span<const Eigen::MatrixXd> batch) {
    return roll_batch(model, to_pointers(batch), false).loss;
}

ModelGrads loss_gradient(const FlowMapModel& model, std::span<const Eigen::MatrixXd> batch,
                         double* loss_out) {
    const auto ptrs = to_pointers(batch);
    BatchRollout roll = roll_batch(model, ptrs, true);
    if (loss_out) *loss_out = roll.loss;
    return gradient_from_rollout(model, ptrs, roll);
}

AdamState make_adam_state(const FlowMapModel& model) {
    AdamState st;
    st.m_weights.reserve(model.n_layers());
    st.v_weights.reserve(model.n_layers());
    st.m_biases.reserve(model.n_layers());
    st.v_biases.reserve(model.n_layers());
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        st.m_weights.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        st.v_weights.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        st.m_biases.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
        st.v_biases.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
    return st;
}

void adam_step(FlowMapModel& model, const ModelGrads& grads, AdamState& state, double lr) {
    if (grads.weights.size() != model.n_layers())
        throw BadInputShape("adam_step: gradient layer count mismatch");
    state.step += 1;
    const auto t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        auto update = [&](auto& param, const auto& grad, auto& m1, auto& m2) {
            m1 = state.beta1 * m1 + (1.0 - state.beta1) * grad;
            m2 = state.beta2 * m2 + (1.0 - state.beta2) * grad.cwiseProduct(grad);
            param.array() -=
                lr * (m1.array() / bc1) / ((m2.array() / bc2).sqrt() + state.epsilon);
        };
        update(model.weights[l], grads.weights[l], state.m_weights[l], state.v_weights[l]);
        update(model.biases[l], grads.biases[l], state.m_biases[l], state.v_biases[l]);
    }
}

TrainResult train(FlowMapModel& model, const SequenceDataset& data, const TrainConfig& cfg) {
    if (data.obs_dim != model.obs_dim)
        throw BadInputShape("train: dataset obs_dim " + std::to_string(data.obs_dim) +
                            " != model obs_dim " + std::to_string(model.obs_dim));
    if (data.spec.memory_len != model.memory_len)
        throw BadInputShape("train: dataset memory_len " + std::to_string(data.spec.memory_len) +
                            " != model memory_len " + std::to_string(model.memory_len));
    if (cfg.recurrent_len != data.spec.recurrent_len)
        throw BadInputShape("train: config recurrent_len " + std::to_string(cfg.recurrent_len) +
                            " != dataset recurrent_len " +
                            std::to_string(data.spec.recurrent_len));
    const std::size_t m_total = data.sequences.size();
    if (cfg.epochs < 1) throw BadInputShape("train: epochs must be >= 1");
    if (cfg.batch_size < 1 || cfg.batch_size > m_total)
        throw BadInputShape("train: batch_size must be in [1, M]");
    if (!(cfg.learning_rate > 0.0)) throw BadInputShape("train: learning_rate must be > 0");

    std::vector<std::size_t> order(m_total);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    AdamState adam = make_adam_state(model);

    TrainResult result;
    result.epoch_loss.reserve(cfg.epochs);
    std::vector<const Eigen::MatrixXd*> batch;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
        double epoch_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < m_total; start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, m_total);
            batch.clear();
            for (std::size_t i = start; i < stop; ++i) batch.push_back(&data.sequences[order[i]]);
            BatchRollout roll = roll_batch(model, batch, true);
            if (!std::isfinite(roll.loss)) throw TrainingDiverged(epoch, n_batches);
            const ModelGrads grads = gradient_from_rollout(model, batch, roll);
            adam_step(model, grads, adam, cfg.learning_rate);
            epoch_sum += roll.loss;
            ++n_batches;
        }
        result.epoch_loss.push_back(epoch_sum / static_cast<double>(n_batches));
    }

    model.meta.dt = data.dt;
    model.meta.dataset_fingerprint = dataset_fingerprint(data);
    model.meta.epochs += cfg.epochs;
    model.meta.seed = cfg.seed;
    model.meta.normalization = data.normalization;
    return result;
}

std::uint64_t model_fingerprint(const FlowMapModel& model) {
    Fnv1a64 h;
    h.update_value(static_cast<std::int32_t>(model.obs_dim));
    h.update_value(static_cast<std::int32_t>(model.memory_len));
    h.update_value(static_cast<std::uint64_t>(model.hidden_layers.size()));
    for (int w : model.hidden_layers) h.update_value(static_cast<std::int32_t>(w));
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        for (Eigen::Index r = 0; r < model.weights[l].rows(); ++r)
            for (Eigen::Index c = 0; c < model.weights[l].cols(); ++c)
                h.update_value(model.weights[l](r, c));
        for (Eigen::Index r = 0; r < model.biases[l].size(); ++r)
            h.update_value(model.biases[l][r]);
    }
    return h.digest();
}

namespace {
constexpr char kCheckpointMagic[4] = {'C', 'F', 'N', 'N'};
}

void save_checkpoint(const FlowMapModel& model, const std::filesystem::path& path) {
    validate_model(model);
    nlohmann::json header;
    header["version"] = 1;
    header["obs_dim"] = model.obs_dim;
    header["memory_len"] = model.memory_len;
    header["hidden_layers"] = model.hidden_layers;
    header["activation"] = "relu";
    header["input_order"] = "oldest-first-row-major";
    header["blob"] = "f64-little-endian-layer-major-weights-row-major-then-bias";
    header["meta"]["dt"] = model.meta.dt;
    header["meta"]["dataset_fingerprint"] = hex64(model.meta.dataset_fingerprint);
    header["meta"]["epochs"] = model.meta.epochs;
    header["meta"]["seed"] = model.meta.seed;
    if (model.meta.normalization) {
        header["meta"]["normalization"]["center"] = std::vector<double>(
            model.meta.normalization->center.begin(), model.meta.normalization->center.end());
        header["meta"]["normalization"]["scale"] = std::vector<double>(
            model.meta.normalization->scale.begin(), model.meta.normalization->scale.end());
    }
    const std::string header_str = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os.write(kCheckpointMagic, 4);
    const auto header_len = static_cast<std::uint64_t>(header_str.size());
    os.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (std::size_t l = 0; l < model.n_layers(); ++l) {
        for (Eigen::Index r = 0; r < model.weights[l].rows(); ++r)
            for (Eigen::Index c = 0; c < model.weights[l].cols(); ++c) {
                const double v = model.weights[l](r, c);
                os.write(reinterpret_cast<const char*>(&v), sizeof(v));
            }
        for (Eigen::Index r = 0; r < model.biases[l].size(); ++r) {
            const double v = model.biases[l][r];
            os.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
    if (!os) throw FormatError("write failure on " + path.string());
}

FlowMapModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw FormatError("bad magic in " + path.string());
    std::uint64_t header_len = 0;
    if (!is.read(reinterpret_cast<char*>(&header_len), sizeof(header_len)))
        throw FormatError("truncated checkpoint header in " + path.string());
    std::string header_str(header_len, '\0');
    if (!is.read(header_str.data(), static_cast<std::streamsize>(header_len)))
        throw FormatError("truncated checkpoint header in " + path.string());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_str);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid checkpoint header JSON: " + std::string(e.what()));
    }
    if (header.value("version", 0) != 1)
        throw FormatError("unsupported checkpoint version in " + path.string());

    FlowMapModel model;
    try {
        model.obs_dim = header.at("obs_dim").get<int>();
        model.memory_len = header.at("memory_len").get<int>();
        model.hidden_layers = header.at("hidden_layers").get<std::vector<int>>();
        const auto& meta = header.at("meta");
        model.meta.dt = meta.at("dt").get<double>();
        model.meta.dataset_fingerprint = parse_hex64(meta.at("dataset_fingerprint").get<std::string>());
        model.meta.epochs = meta.at("epochs").get<std::uint64_t>();
        model.meta.seed = meta.at("seed").get<std::uint64_t>();
        if (meta.contains("normalization")) {
            Normalization norm;
            const auto center = meta["normalization"].at("center").get<std::vector<double>>();
            const auto scale = meta["normalization"].at("scale").get<std::vector<double>>();
            norm.center = Eigen::Map<const Eigen::VectorXd>(center.data(),
                                                            static_cast<Eigen::Index>(center.size()));
            norm.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(),
                                                           static_cast<Eigen::Index>(scale.size()));
            model.meta.normalization = std::move(norm);
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint header missing fields: " + std::string(e.what()));
    }

    const auto widths = layer_widths(model.obs_dim, model.memory_len, model.hidden_layers);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Eigen::MatrixXd w(widths[l + 1], widths[l]);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) {
                double v = 0;
                if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
                    throw FormatError("truncated parameter blob in " + path.string());
                w(r, c) = v;
            }
        Eigen::VectorXd b(widths[l + 1]);
        for (Eigen::Index r = 0; r < b.size(); ++r) {
            double v = 0;
            if (!is.read(reinterpret_cast<char*>(&v), sizeof(v)))
                throw FormatError("truncated parameter blob in " + path.string());
            b[r] = v;
        }
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    validate_model(model);
    return model;
}

} // namespace chaosflow
