#include "chaosflow/dynamics.hpp"

#include "chaosflow/errors.hpp"

namespace chaosflow {

int SystemSpec::dimension() const {
    if (is_lorenz63()) return 3;
    return std::get<Lorenz96Params>(params).n;
}

std::vector<std::string> SystemSpec::state_labels() const {
    if (is_lorenz63()) return {"x", "y", "z"};
    const int n = std::get<Lorenz96Params>(params).n;
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) labels.push_back("x" + std::to_string(i));
    return labels;
}

Eigen::Vector3d lorenz63_rhs(const Eigen::Vector3d& s, const Lorenz63Params& p) {
    return {p.sigma * (s[1] - s[0]),
            s[0] * (p.rho - s[2]) - s[1],
            s[0] * s[1] - p.beta * s[2]};
}

Eigen::VectorXd lorenz96_rhs(const Eigen::VectorXd& s, const Lorenz96Params& p) {
    const int n = p.n;
    if (s.size() != n)
        throw BadInputShape("lorenz96_rhs: state has " + std::to_string(s.size()) +
                            " components, params.n = " + std::to_string(n));
    Eigen::VectorXd out(n);
    for (int i = 0; i < n; ++i) {
        const int ip1 = (i + 1) % n;
        const int im1 = (i - 1 + n) % n;
        const int im2 = (i - 2 + n) % n;
        out[i] = (s[ip1] - s[im2]) * s[im1] - p.damping * s[i] + p.forcing;
    }
    return out;
}

RhsFn make_rhs(const SystemSpec& system) {
    if (system.is_lorenz63()) {
        const auto p = std::get<Lorenz63Params>(system.params);
        return [p](const Eigen::VectorXd& s, Eigen::VectorXd& out) {
            out[0] = p.sigma * (s[1] - s[0]);
            out[1] = s[0] * (p.rho - s[2]) - s[1];
            out[2] = s[0] * s[1] - p.beta * s[2];
        };
    }
    const auto p = std::get<Lorenz96Params>(system.params);
    return [p](const Eigen::VectorXd& s, Eigen::VectorXd& out) {
        const int n = p.n;
        for (int i = 0; i < n; ++i) {
            const int ip1 = (i + 1) % n;
            const int im1 = (i - 1 + n) % n;
            const int im2 = (i - 2 + n) % n;
            out[i] = (s[ip1] - s[im2]) * s[im1] - p.damping * s[i] + p.forcing;
        }
    };
}

namespace {

// Preallocated RK4 stage buffers so long integrations do not allocate
// inside the hot loop.
struct Rk4Workspace {
    Eigen::VectorXd k1, k2, k3, k4, tmp;

    explicit Rk4Workspace(Eigen::Index d) : k1(d), k2(d), k3(d), k4(d), tmp(d) {}

    void step(const RhsFn& rhs, Eigen::VectorXd& state, double dt) {
        rhs(state, k1);
        tmp = state + (0.5 * dt) * k1;
        rhs(tmp, k2);
        tmp = state + (0.5 * dt) * k2;
        rhs(tmp, k3);
        tmp = state + dt * k3;
        rhs(tmp, k4);
        state += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
};

} // namespace

Eigen::VectorXd rk4_step(const RhsFn& rhs, const Eigen::VectorXd& state, double dt) {
    Rk4Workspace ws(state.size());
    Eigen::VectorXd next = state;
    ws.step(rhs, next, dt);
    if (!next.allFinite()) throw IntegrationDiverged(0);
    return next;
}

Trajectory integrate(const SystemSpec& system, const Eigen::VectorXd& x0, double dt,
                     std::size_t n_steps, int substeps) {
    if (!(dt > 0.0)) throw BadInputShape("integrate: dt must be > 0");
    if (n_steps < 1) throw BadInputShape("integrate: n_steps must be >= 1");
    if (substeps < 1) throw BadInputShape("integrate: substeps must be >= 1");
    const int d = system.dimension();
    if (x0.size() != d)
        throw BadInputShape("integrate: initial condition has " + std::to_string(x0.size()) +
                            " components, system dimension is " + std::to_string(d));

    const RhsFn rhs = make_rhs(system);
    Trajectory traj;
    traj.dt = dt;
    traj.t0 = 0.0;
    traj.labels = system.state_labels();
    traj.states.resize(static_cast<Eigen::Index>(n_steps) + 1, d);

    Eigen::VectorXd state = x0;
    traj.states.row(0) = state.transpose();
    Rk4Workspace ws(d);
    const double h = dt / static_cast<double>(substeps);
    for (std::size_t i = 1; i <= n_steps; ++i) {
        for (int s = 0; s < substeps; ++s) ws.step(rhs, state, h);
        if (!state.allFinite()) throw IntegrationDiverged(i);
        traj.states.row(static_cast<Eigen::Index>(i)) = state.transpose();
    }
    return traj;
}

} // namespace chaosflow
