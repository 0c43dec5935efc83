#include "chaosflow/dataset.hpp"

#include "chaosflow/errors.hpp"
#include "chaosflow/hash.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <random>

namespace chaosflow {

namespace {

constexpr char kMagic[4] = {'C', 'F', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

void check_spec(const DatasetSpec& spec) {
    if (spec.m_sequences < 1) throw BadInputShape("dataset: M must be >= 1");
    if (spec.memory_len < 0) throw BadInputShape("dataset: memory_len must be >= 0");
    if (spec.recurrent_len < 1) throw BadInputShape("dataset: recurrent_len must be >= 1");
}

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw FormatError(std::string("truncated dataset file while reading ") + what);
    return v;
}

} // namespace

Trajectory project_observed(const Trajectory& traj, const ObservationSpec& obs) {
    if (obs.indices.empty()) throw BadInputShape("observation indices must be non-empty");
    for (std::size_t i = 1; i < obs.indices.size(); ++i)
        if (obs.indices[i] <= obs.indices[i - 1])
            throw BadInputShape("observation indices must be strictly increasing");
    Trajectory out;
    out.dt = traj.dt;
    out.t0 = traj.t0;
    out.states.resize(traj.rows(), static_cast<Eigen::Index>(obs.indices.size()));
    out.labels.reserve(obs.indices.size());
    for (std::size_t j = 0; j < obs.indices.size(); ++j) {
        const int idx = obs.indices[j];
        if (idx < 0 || idx >= traj.dim()) throw BadObservation(idx, static_cast<int>(traj.dim()));
        out.states.col(static_cast<Eigen::Index>(j)) = traj.states.col(idx);
        out.labels.push_back(traj.labels[static_cast<std::size_t>(idx)]);
    }
    return out;
}

SequenceDataset sample_sequences(const Trajectory& traj, const DatasetSpec& spec,
                                 bool normalize) {
    check_spec(spec);
    const int window = spec.window_len();
    if (traj.rows() < window)
        throw InsufficientData("sample_sequences", static_cast<std::size_t>(window),
                               static_cast<std::size_t>(traj.rows()));

    SequenceDataset data;
    data.spec = spec;
    data.obs_dim = static_cast<int>(traj.dim());
    data.dt = traj.dt;
    data.source_fingerprint = trajectory_fingerprint(traj);

    Eigen::MatrixXd source = traj.states;
    if (normalize) {
        Normalization norm;
        norm.center = source.colwise().mean();
        Eigen::VectorXd var = (source.rowwise() - norm.center.transpose())
                                  .array()
                                  .square()
                                  .colwise()
                                  .mean();
        norm.scale = var.array().sqrt().max(1e-12);
        source = (source.rowwise() - norm.center.transpose()).array().rowwise() /
                 norm.scale.transpose().array();
        data.normalization = std::move(norm);
    }

    const std::int64_t max_offset = traj.rows() - window; // inclusive
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::int64_t> dist(0, max_offset);
    data.sequences.reserve(spec.m_sequences);
    for (std::size_t m = 0; m < spec.m_sequences; ++m) {
        const std::int64_t off = dist(rng);
        data.sequences.push_back(source.middleRows(off, window));
    }
    return data;
}

std::uint64_t dataset_fingerprint(const SequenceDataset& data) {
    Fnv1a64 h;
    h.update_value(static_cast<std::uint64_t>(data.spec.m_sequences));
    h.update_value(static_cast<std::int32_t>(data.spec.memory_len));
    h.update_value(static_cast<std::int32_t>(data.spec.recurrent_len));
    h.update_value(data.spec.seed);
    h.update_value(static_cast<std::int32_t>(data.obs_dim));
    h.update_value(data.dt);
    h.update_value(data.source_fingerprint);
    h.update_value(static_cast<std::uint8_t>(data.normalization.has_value()));
    if (data.normalization) {
        for (Eigen::Index j = 0; j < data.normalization->center.size(); ++j) {
            h.update_value(data.normalization->center[j]);
            h.update_value(data.normalization->scale[j]);
        }
    }
    for (const auto& seq : data.sequences)
        for (Eigen::Index i = 0; i < seq.rows(); ++i)
            for (Eigen::Index j = 0; j < seq.cols(); ++j) h.update_value(seq(i, j));
    return h.digest();
}

void save_dataset(const SequenceDataset& data, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for writing: " + path.string());
    os.write(kMagic, 4);
    write_raw(os, kVersion);
    write_raw(os, static_cast<std::uint64_t>(data.spec.m_sequences));
    write_raw(os, static_cast<std::int32_t>(data.spec.memory_len));
    write_raw(os, static_cast<std::int32_t>(data.spec.recurrent_len));
    write_raw(os, data.spec.seed);
    write_raw(os, static_cast<std::uint32_t>(data.obs_dim));
    write_raw(os, data.dt);
    write_raw(os, data.source_fingerprint);
    write_raw(os, static_cast<std::uint8_t>(data.normalization.has_value() ? 1 : 0));
    if (data.normalization) {
        for (Eigen::Index j = 0; j < data.obs_dim; ++j) write_raw(os, data.normalization->center[j]);
        for (Eigen::Index j = 0; j < data.obs_dim; ++j) write_raw(os, data.normalization->scale[j]);
    }
    const int window = data.spec.window_len();
    std::vector<double> row(static_cast<std::size_t>(data.obs_dim));
    for (const auto& seq : data.sequences) {
        if (seq.rows() != window || seq.cols() != data.obs_dim)
            throw BadInputShape("dataset sequence shape inconsistent with spec");
        for (Eigen::Index i = 0; i < seq.rows(); ++i) {
            for (Eigen::Index j = 0; j < seq.cols(); ++j) row[static_cast<std::size_t>(j)] = seq(i, j);
            os.write(reinterpret_cast<const char*>(row.data()),
                     static_cast<std::streamsize>(row.size() * sizeof(double)));
        }
    }
    if (!os) throw FormatError("write failure on " + path.string());

    nlohmann::json side;
    side["format"] = "chaosflow-dataset";
    side["version"] = kVersion;
    side["m_sequences"] = data.spec.m_sequences;
    side["memory_len"] = data.spec.memory_len;
    side["recurrent_len"] = data.spec.recurrent_len;
    side["seed"] = data.spec.seed;
    side["obs_dim"] = data.obs_dim;
    side["dt"] = data.dt;
    side["window_len"] = window;
    side["fingerprint"] = hex64(dataset_fingerprint(data));
    side["source_fingerprint"] = hex64(data.source_fingerprint);
    side["normalized"] = data.normalization.has_value();
    if (data.normalization) {
        side["normalization"]["center"] =
            std::vector<double>(data.normalization->center.begin(), data.normalization->center.end());
        side["normalization"]["scale"] =
            std::vector<double>(data.normalization->scale.begin(), data.normalization->scale.end());
    }
    std::filesystem::path side_path = path;
    side_path += ".json";
    std::ofstream sos(side_path);
    if (!sos) throw FormatError("cannot open for writing: " + side_path.string());
    sos << side.dump(2) << '\n';
}

SequenceDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("bad magic in " + path.string());
    const auto version = read_raw<std::uint32_t>(is, "version");
    if (version != kVersion)
        throw FormatError("unsupported dataset version " + std::to_string(version));

    SequenceDataset data;
    data.spec.m_sequences = read_raw<std::uint64_t>(is, "m_sequences");
    data.spec.memory_len = read_raw<std::int32_t>(is, "memory_len");
    data.spec.recurrent_len = read_raw<std::int32_t>(is, "recurrent_len");
    data.spec.seed = read_raw<std::uint64_t>(is, "seed");
    data.obs_dim = static_cast<int>(read_raw<std::uint32_t>(is, "obs_dim"));
    data.dt = read_raw<double>(is, "dt");
    data.source_fingerprint = read_raw<std::uint64_t>(is, "source_fingerprint");
    const auto normalized = read_raw<std::uint8_t>(is, "normalization flag");
    if (normalized) {
        Normalization norm;
        norm.center.resize(data.obs_dim);
        norm.scale.resize(data.obs_dim);
        for (Eigen::Index j = 0; j < data.obs_dim; ++j) norm.center[j] = read_raw<double>(is, "center");
        for (Eigen::Index j = 0; j < data.obs_dim; ++j) norm.scale[j] = read_raw<double>(is, "scale");
        data.normalization = std::move(norm);
    }
    check_spec(data.spec);
    if (data.obs_dim < 1) throw FormatError("dataset obs_dim must be >= 1");

    const int window = data.spec.window_len();
    std::vector<double> row(static_cast<std::size_t>(data.obs_dim));
    data.sequences.reserve(data.spec.m_sequences);
    for (std::size_t m = 0; m < data.spec.m_sequences; ++m) {
        Eigen::MatrixXd seq(window, data.obs_dim);
        for (int i = 0; i < window; ++i) {
            if (!is.read(reinterpret_cast<char*>(row.data()),
                         static_cast<std::streamsize>(row.size() * sizeof(double))))
                throw FormatError("truncated payload in " + path.string());
            for (int j = 0; j < data.obs_dim; ++j) seq(i, j) = row[static_cast<std::size_t>(j)];
        }
        data.sequences.push_back(std::move(seq));
    }
    return data;
}

Eigen::VectorXd apply_normalization(const Normalization& norm, const Eigen::VectorXd& x) {
    return (x - norm.center).cwiseQuotient(norm.scale);
}

Eigen::VectorXd invert_normalization(const Normalization& norm, const Eigen::VectorXd& y) {
    return norm.center + y.cwiseProduct(norm.scale);
}

} // namespace chaosflow
