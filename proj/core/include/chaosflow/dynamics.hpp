#pragma once

#include "chaosflow/trajectory.hpp"

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <variant>
#include <vector>

namespace chaosflow {

struct Lorenz63Params {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
};

struct Lorenz96Params {
    int n = 40;
    double forcing = 8.0;
    // The textbook system has a -x_i term; damping=1 reproduces it,
    // damping=0 drops it.
    double damping = 1.0;
};

struct SystemSpec {
    std::variant<Lorenz63Params, Lorenz96Params> params = Lorenz63Params{};

    bool is_lorenz63() const { return std::holds_alternative<Lorenz63Params>(params); }
    int dimension() const;
    std::vector<std::string> state_labels() const;
};

Eigen::Vector3d lorenz63_rhs(const Eigen::Vector3d& state, const Lorenz63Params& p);
Eigen::VectorXd lorenz96_rhs(const Eigen::VectorXd& state, const Lorenz96Params& p);

// Derivative evaluated in place: rhs(state, out).
using RhsFn = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

RhsFn make_rhs(const SystemSpec& system);

// One classical RK4 update.  Throws IntegrationDiverged (step 0) if the
// update produces a non-finite state.
Eigen::VectorXd rk4_step(const RhsFn& rhs, const Eigen::VectorXd& state, double dt);

// Integrates with internal step dt/substeps, recording every dt.  The result
// has n_steps+1 rows and row 0 == x0.  Non-finite states raise
// IntegrationDiverged carrying the recorded step index.
Trajectory integrate(const SystemSpec& system, const Eigen::VectorXd& x0, double dt,
                     std::size_t n_steps, int substeps = 10);

} // namespace chaosflow
