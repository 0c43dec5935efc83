#include "chaosflow/rollout.hpp"

#include "chaosflow/errors.hpp"

#include <cmath>

namespace chaosflow {

PredictionRun predict(const FlowMapModel& model, const Eigen::MatrixXd& seed_window,
                      std::size_t n_steps, double dt, double t0,
                      std::vector<std::string> labels) {
    if (seed_window.rows() != model.memory_len + 1 || seed_window.cols() != model.obs_dim)
        throw BadInputShape("predict: seed window must be (memory_len+1) x obs_dim");
    if (!(dt > 0.0)) throw BadInputShape("predict: dt must be > 0");
    const int m = model.obs_dim;
    if (labels.empty())
        for (int j = 0; j < m; ++j) labels.push_back("c" + std::to_string(j));
    if (labels.size() != static_cast<std::size_t>(m))
        throw BadInputShape("predict: label count does not match obs_dim");

    PredictionRun run;
    run.model_fingerprint = model_fingerprint(model);
    run.seed_window = seed_window;
    run.dt = dt;

    const Eigen::Index seed_rows = seed_window.rows();
    Eigen::MatrixXd states(seed_rows + static_cast<Eigen::Index>(n_steps), m);
    states.topRows(seed_rows) = seed_window;

    Eigen::MatrixXd win = seed_window;
    Eigen::Index produced = 0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const Eigen::VectorXd z = win.row(win.rows() - 1).transpose() + net_forward(model, win);
        if (!z.allFinite()) {
            run.diverged_at = k + 1;
            break;
        }
        states.row(seed_rows + produced) = z.transpose();
        ++produced;
        if (model.memory_len > 0)
            win.topRows(model.memory_len) = win.bottomRows(model.memory_len).eval();
        win.row(win.rows() - 1) = z.transpose();
    }

    run.predicted.dt = dt;
    run.predicted.t0 = t0;
    run.predicted.labels = std::move(labels);
    run.predicted.states = states.topRows(seed_rows + produced);
    return run;
}

Eigen::MatrixXd pointwise_log_abs_error(const Trajectory& pred, const Trajectory& ref) {
    if (pred.dim() != ref.dim())
        throw BadInputShape("pointwise_log_abs_error: column counts differ");
    if (std::abs(pred.dt - ref.dt) > 1e-12 * std::max(1.0, std::abs(ref.dt)))
        throw BadInputShape("pointwise_log_abs_error: dt differs");
    const Eigen::Index rows = std::min(pred.rows(), ref.rows());
    if (rows < 1) throw BadInputShape("pointwise_log_abs_error: no overlapping rows");
    constexpr double kFloor = -16.0;
    Eigen::MatrixXd out(rows, pred.dim());
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < pred.dim(); ++j) {
            const double diff = std::abs(pred.states(i, j) - ref.states(i, j));
            out(i, j) = diff > 0.0 ? std::max(std::log10(diff), kFloor) : kFloor;
        }
    return out;
}

Envelope trajectory_envelope(const Trajectory& traj) {
    Envelope env;
    env.abs_max = traj.states.cwiseAbs().colwise().maxCoeff();
    return env;
}

bool within_envelope(const Trajectory& traj, const Envelope& envelope, double factor) {
    if (traj.dim() != envelope.abs_max.size())
        throw BadInputShape("within_envelope: dimension mismatch");
    const Eigen::VectorXd limit = factor * envelope.abs_max;
    for (Eigen::Index j = 0; j < traj.dim(); ++j)
        if (traj.states.col(j).cwiseAbs().maxCoeff() > limit[j]) return false;
    return true;
}

Eigen::MatrixXd seed_window_from(const Trajectory& traj, int memory_len) {
    if (traj.rows() < memory_len + 1)
        throw InsufficientData("seed_window_from", static_cast<std::size_t>(memory_len + 1),
                               static_cast<std::size_t>(traj.rows()));
    return traj.states.topRows(memory_len + 1);
}

} // namespace chaosflow
