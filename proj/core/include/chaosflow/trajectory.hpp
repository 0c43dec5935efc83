#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace chaosflow {

// Uniformly sampled multivariate time series: row i is the state at
// t0 + i*dt.  The common currency between simulation, training and metrics.
struct Trajectory {
    double dt = 0.0;
    double t0 = 0.0;
    Eigen::MatrixXd states; // (n_steps+1) x d
    std::vector<std::string> labels;

    Eigen::Index rows() const { return states.rows(); }
    Eigen::Index dim() const { return states.cols(); }
    double time_at(Eigen::Index i) const { return t0 + dt * static_cast<double>(i); }
};

// Throws BadInputShape/FormatError when invariants are broken
// (dt <= 0, non-finite entries, label/column mismatch).
void validate(const Trajectory& traj);

// Text carrier: one header line
//   # chaosflow-traj v1; dt=<float>; t0=<float>; cols=<comma-separated labels>
// followed by one CSV row of state components per sample.  Floats are
// written with shortest round-trip formatting, so load(save(t)) == t bitwise.
void save_trajectory_text(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory_text(const std::filesystem::path& path);

// Binary carrier: magic "CFTJ", version u32, dt f64, t0 f64, d u32,
// n u64 (row count), then n*d row-major f64, all little-endian.
// Labels ride in a ";"-joined string after the header for fidelity.
void save_trajectory_binary(const Trajectory& traj, const std::filesystem::path& path);
Trajectory load_trajectory_binary(const std::filesystem::path& path);

// Sniffs the magic bytes and dispatches to the right loader.
Trajectory load_trajectory(const std::filesystem::path& path);

// Content fingerprint over dt, t0, shape, labels and the row-major payload;
// identical for the same data regardless of carrier format.
std::uint64_t trajectory_fingerprint(const Trajectory& traj);

// Shortest-round-trip decimal formatting used by every text artifact.
std::string format_double(double v);
double parse_double(const std::string& s);

} // namespace chaosflow
