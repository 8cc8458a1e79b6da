#include "safemaddpg/particle_env.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace safemaddpg {

std::string stress_mode_name(StressMode m) {
    switch (m) {
        case StressMode::None: return "none";
        case StressMode::Ed: return "ed";
        case StressMode::Ui: return "ui";
    }
    return "none";
}

StressMode stress_mode_from_name(const std::string& name) {
    if (name == "none") return StressMode::None;
    if (name == "ed") return StressMode::Ed;
    if (name == "ui") return StressMode::Ui;
    throw std::invalid_argument("unknown stress mode: " + name);
}

void EnvConfig::validate() const {
    if (n_agents < 2) throw std::invalid_argument("env: n_agents must be at least 2");
    if (dt <= 0.0) throw std::invalid_argument("env: dt must be positive");
    if (damping < 0.0 || damping >= 1.0) throw std::invalid_argument("env: damping must lie in [0,1)");
    if (mass <= 0.0) throw std::invalid_argument("env: mass must be positive");
    if (arena_half_width <= 0.0) throw std::invalid_argument("env: arena_half_width must be positive");
    if (collision_distance <= 0.0 || collision_distance >= arena_half_width)
        throw std::invalid_argument("env: collision_distance must lie in (0, arena_half_width)");
    if (collision_penalty < 0.0) throw std::invalid_argument("env: collision_penalty must be non-negative");
    if (episode_length < 1) throw std::invalid_argument("env: episode_length must be at least 1");
    if (disturbance_half_width < 0.0) throw std::invalid_argument("env: disturbance_half_width must be non-negative");
}

namespace {

Eigen::MatrixXd uniform_points(int n, double half_width, Rng& rng) {
    Eigen::MatrixXd p(n, 2);
    for (int i = 0; i < n; ++i) {
        p(i, 0) = rng.uniform(-half_width, half_width);
        p(i, 1) = rng.uniform(-half_width, half_width);
    }
    return p;
}

bool well_separated(const Eigen::MatrixXd& p, double min_dist) {
    for (int i = 0; i < p.rows(); ++i)
        for (int k = i + 1; k < p.rows(); ++k)
            if ((p.row(i) - p.row(k)).norm() < min_dist) return false;
    return true;
}

// fallback placement on a lattice spanning the arena
Eigen::MatrixXd grid_points(int n, double half_width) {
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    Eigen::MatrixXd p(n, 2);
    for (int i = 0; i < n; ++i) {
        const int r = i / side, c = i % side;
        const double u = side == 1 ? 0.0 : (2.0 * c / (side - 1) - 1.0);
        const double v = side == 1 ? 0.0 : (2.0 * r / (side - 1) - 1.0);
        p(i, 0) = 0.8 * half_width * u;
        p(i, 1) = 0.8 * half_width * v;
    }
    return p;
}

}  // namespace

WorldState reset(const EnvConfig& config, Rng& rng) {
    config.validate();
    WorldState s;
    if (config.stress_mode == StressMode::Ui) {
        s.positions = uniform_points(config.n_agents, config.arena_half_width, rng);
    } else {
        const double min_dist = config.collision_distance + kResetSeparationMargin;
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            s.positions = uniform_points(config.n_agents, config.arena_half_width, rng);
            placed = well_separated(s.positions, min_dist);
        }
        if (!placed) s.positions = grid_points(config.n_agents, config.arena_half_width);
    }
    s.velocities = Eigen::MatrixXd::Zero(config.n_agents, 2);
    s.targets = uniform_points(config.n_agents, config.arena_half_width, rng);
    s.step_index = 0;
    return s;
}

StepOutcome step(const WorldState& state, const Eigen::VectorXd& joint_action, const EnvConfig& config,
                 Rng& rng) {
    if (joint_action.size() != config.action_dim())
        throw std::invalid_argument("step: joint_action has wrong length");
    for (long d = 0; d < joint_action.size(); ++d)
        if (!(joint_action(d) >= -1.0 - 1e-12 && joint_action(d) <= 1.0 + 1e-12))
            throw std::invalid_argument("step: action entry outside [-1, 1]");
    if (state.step_index >= config.episode_length)
        throw std::logic_error("step: episode already finished");

    StepOutcome out;
    out.next = state;
    const double w = config.arena_half_width;
    for (int i = 0; i < config.n_agents; ++i) {
        for (int axis = 0; axis < 2; ++axis) {
            const double a = joint_action(2 * i + axis);
            double v = (1.0 - config.damping) * state.velocities(i, axis) + (a / config.mass) * config.dt;
            double p = state.positions(i, axis) + v * config.dt;
            if (p > w) { p = w; v = 0.0; }
            if (p < -w) { p = -w; v = 0.0; }
            out.next.velocities(i, axis) = v;
            out.next.positions(i, axis) = p;
        }
    }
    if (config.stress_mode == StressMode::Ed && config.disturbance_half_width > 0.0) {
        for (int i = 0; i < config.n_agents; ++i)
            for (int axis = 0; axis < 2; ++axis)
                out.next.positions(i, axis) +=
                    rng.uniform(-config.disturbance_half_width, config.disturbance_half_width);
    }

    out.rewards = Eigen::VectorXd::Zero(config.n_agents);
    for (int i = 0; i < config.n_agents; ++i) {
        const double l1 = (out.next.positions.row(i) - out.next.targets.row(i)).cwiseAbs().sum();
        int colliding_counterparts = 0;
        for (int k = 0; k < config.n_agents; ++k) {
            if (k == i) continue;
            if ((out.next.positions.row(i) - out.next.positions.row(k)).norm() < config.collision_distance)
                ++colliding_counterparts;
        }
        out.rewards(i) = -l1 - config.collision_penalty * colliding_counterparts;
    }
    out.collisions = count_collisions(out.next, config);
    out.next.step_index = state.step_index + 1;
    return out;
}

Eigen::VectorXd observe(const WorldState& state, int agent_index, const EnvConfig& config) {
    if (agent_index < 0 || agent_index >= config.n_agents)
        throw std::out_of_range("observe: agent index out of range");
    Eigen::VectorXd obs(config.obs_dim());
    long at = 0;
    obs.segment(at, 2) = state.positions.row(agent_index);
    at += 2;
    obs.segment(at, 2) = state.velocities.row(agent_index);
    at += 2;
    for (int k = 0; k < config.n_agents; ++k) {
        if (k == agent_index) continue;
        obs.segment(at, 2) = state.positions.row(k) - state.positions.row(agent_index);
        at += 2;
    }
    obs.segment(at, 2) = state.targets.row(agent_index) - state.positions.row(agent_index);
    return obs;
}

Eigen::VectorXd joint_observation(const WorldState& state, const EnvConfig& config) {
    const int d = config.obs_dim();
    Eigen::VectorXd joint(config.n_agents * d);
    for (int i = 0; i < config.n_agents; ++i) joint.segment(static_cast<long>(i) * d, d) = observe(state, i, config);
    return joint;
}

std::pair<int, int> constraint_pair(int j, int n_agents) {
    if (j < 0 || j >= n_agents * (n_agents - 1)) throw std::out_of_range("constraint index out of range");
    const int i = j / (n_agents - 1);
    int k = j % (n_agents - 1);
    if (k >= i) ++k;
    return {i, k};
}

Eigen::VectorXd constraint_values(const WorldState& state, const EnvConfig& config) {
    Eigen::VectorXd c(config.n_constraints());
    for (int j = 0; j < config.n_constraints(); ++j) {
        const auto [i, k] = constraint_pair(j, config.n_agents);
        c(j) = config.collision_distance - (state.positions.row(i) - state.positions.row(k)).norm();
    }
    return c;
}

int count_collisions(const WorldState& state, const EnvConfig& config) {
    int n = 0;
    for (int i = 0; i < config.n_agents; ++i)
        for (int k = i + 1; k < config.n_agents; ++k)
            if ((state.positions.row(i) - state.positions.row(k)).norm() < config.collision_distance) ++n;
    return n;
}

void write_trace_header(std::ostream& out, const EnvConfig& config) {
    out << "episode,step";
    for (int i = 0; i < config.n_agents; ++i)
        out << ",px" << i << ",py" << i << ",vx" << i << ",vy" << i << ",ax" << i << ",ay" << i << ",reward" << i;
    for (int j = 0; j < config.n_constraints(); ++j) out << ",c" << j;
    out << ",collisions,stress_mode\n";
}

void write_trace_row(std::ostream& out, int episode, int step_index, const WorldState& before,
                     const Eigen::VectorXd& joint_action, const StepOutcome& outcome,
                     const EnvConfig& config) {
    char buf[32];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        out << ',' << buf;
    };
    out << episode << ',' << step_index;
    for (int i = 0; i < config.n_agents; ++i) {
        put(before.positions(i, 0));
        put(before.positions(i, 1));
        put(before.velocities(i, 0));
        put(before.velocities(i, 1));
        put(joint_action(2 * i));
        put(joint_action(2 * i + 1));
        put(outcome.rewards(i));
    }
    const Eigen::VectorXd c = constraint_values(outcome.next, config);
    for (long j = 0; j < c.size(); ++j) put(c(j));
    out << ',' << outcome.collisions << ',' << stress_mode_name(config.stress_mode) << '\n';
}

}  // namespace safemaddpg
