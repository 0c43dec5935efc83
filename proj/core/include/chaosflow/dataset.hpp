#pragma once

#include "chaosflow/trajectory.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace chaosflow {

// Ordered, strictly increasing column indices into the full state.
struct ObservationSpec {
    std::vector<int> indices;
};

struct DatasetSpec {
    std::size_t m_sequences = 1; // M
    int memory_len = 0;          // n_M
    int recurrent_len = 1;       // K
    std::uint64_t seed = 0;

    int window_len() const { return memory_len + recurrent_len + 1; }
};

// Affine per-channel transform y = (x - center) / scale, applied to stored
// windows when normalization is requested (off by default).
struct Normalization {
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
};

struct SequenceDataset {
    DatasetSpec spec;
    int obs_dim = 0;
    double dt = 0.0;
    std::uint64_t source_fingerprint = 0;
    std::optional<Normalization> normalization;
    std::vector<Eigen::MatrixXd> sequences; // each (n_M+K+1) x obs_dim
};

Trajectory project_observed(const Trajectory& traj, const ObservationSpec& obs);

// Draws M window start offsets uniformly with replacement (one draw per
// window, in index order) from the seeded generator; windows are verbatim
// slices of the source unless normalize is set, in which case the per-column
// mean/std of the full source trajectory is removed first.
SequenceDataset sample_sequences(const Trajectory& traj, const DatasetSpec& spec,
                                 bool normalize = false);

std::uint64_t dataset_fingerprint(const SequenceDataset& data);

// Binary carrier (magic "CFDS") plus a JSON sidecar at <path>.json
// mirroring the spec fields for human inspection.
void save_dataset(const SequenceDataset& data, const std::filesystem::path& path);
SequenceDataset load_dataset(const std::filesystem::path& path);

Eigen::VectorXd apply_normalization(const Normalization& norm, const Eigen::VectorXd& x);
Eigen::VectorXd invert_normalization(const Normalization& norm, const Eigen::VectorXd& y);

} // namespace chaosflow
