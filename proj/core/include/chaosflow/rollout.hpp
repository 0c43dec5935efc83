#pragma once

#include "chaosflow/flownet.hpp"
#include "chaosflow/trajectory.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace chaosflow {

struct PredictionRun {
    std::uint64_t model_fingerprint = 0;
    Eigen::MatrixXd seed_window; // (n_M+1) x m
    double dt = 0.0;
    Trajectory predicted; // starts with the seed window rows verbatim
    std::optional<std::size_t> diverged_at;
};

// Marches the model forward n_steps from the seed window.  A non-finite
// state truncates the run and records diverged_at instead of throwing:
// blow-up is a reportable outcome for chaotic rollouts, not an error.
PredictionRun predict(const FlowMapModel& model, const Eigen::MatrixXd& seed_window,
                      std::size_t n_steps, double dt, double t0 = 0.0,
                      std::vector<std::string> labels = {});

// Elementwise log10|pred - ref| over the overlapping rows; exact zeros are
// floored at -16.
Eigen::MatrixXd pointwise_log_abs_error(const Trajectory& pred, const Trajectory& ref);

// Coordinate-wise absolute bounds of a trajectory, the stability acceptance
// region for rollouts.
struct Envelope {
    Eigen::VectorXd abs_max;
};

Envelope trajectory_envelope(const Trajectory& traj);

// True iff max|state| per coordinate stays within factor * envelope.
bool within_envelope(const Trajectory& traj, const Envelope& envelope, double factor);

// First n_M+1 rows of a trajectory, the standard seed for predict().
Eigen::MatrixXd seed_window_from(const Trajectory& traj, int memory_len);

} // namespace chaosflow
