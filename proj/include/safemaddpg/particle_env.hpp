#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "safemaddpg/rng.hpp"

namespace safemaddpg {

enum class StressMode { None, Ed, Ui };

std::string stress_mode_name(StressMode m);
StressMode stress_mode_from_name(const std::string& name);

/// 2-D particle world: N agents with double-integrator dynamics chase
/// per-agent landmark targets inside a square arena; reward is negative
/// l1 distance to the target with a penalty per colliding counterpart.
struct EnvConfig {
    int n_agents = 3;
    double dt = 0.2;
    double damping = 0.9;
    double mass = 0.45;
    double arena_half_width = 1.0;
    double collision_distance = 0.3;   // d_min
    double collision_penalty = 1.0;    // per colliding counterpart per step
    int episode_length = 25;
    double disturbance_half_width = 0.05;  // Ed mode position noise
    StressMode stress_mode = StressMode::None;

    int n_constraints() const { return n_agents * (n_agents - 1); }
    int obs_dim() const { return 4 + 2 * (n_agents - 1) + 2; }
    int action_dim() const { return 2 * n_agents; }
    void validate() const;
};

struct WorldState {
    Eigen::MatrixXd positions;   // n_agents x 2
    Eigen::MatrixXd velocities;  // n_agents x 2
    Eigen::MatrixXd targets;     // n_agents x 2
    int step_index = 0;
};

struct StepOutcome {
    WorldState next;
    Eigen::VectorXd rewards;   // per agent
    int collisions = 0;        // unordered pairs below d_min this step
};

/// Uniform placement of agents and targets, zero velocities. Outside Ui
/// mode, agent placements are resampled until every pair is separated by
/// collision_distance + kResetSeparationMargin (bounded attempts, then a
/// deterministic well-separated grid).
WorldState reset(const EnvConfig& config, Rng& rng);

inline constexpr double kResetSeparationMargin = 0.05;

/// One dynamics step. joint_action is the concatenation of per-agent
/// accelerations, entries in [-1, 1].
StepOutcome step(const WorldState& state, const Eigen::VectorXd& joint_action, const EnvConfig& config,
                 Rng& rng);

/// Per-agent observation: own position, own velocity, displacement to
/// each other agent (other - self, by agent index), displacement to the
/// own target. Length 10 for the 3-agent world.
Eigen::VectorXd observe(const WorldState& state, int agent_index, const EnvConfig& config);

/// All observations concatenated in agent order (n_agents * obs_dim).
Eigen::VectorXd joint_observation(const WorldState& state, const EnvConfig& config);

/// Constraint j enumerates ordered pairs (i, k), i != k, lexicographically:
/// c_j(x) = collision_distance - |p_i - p_k|_2, satisfied iff c_j <= 0.
Eigen::VectorXd constraint_values(const WorldState& state, const EnvConfig& config);

/// Ordered agent pair backing constraint index j.
std::pair<int, int> constraint_pair(int j, int n_agents);

/// Unordered pairs currently closer than collision_distance.
int count_collisions(const WorldState& state, const EnvConfig& config);

/// Episode trace export: header + one CSV row per step.
void write_trace_header(std::ostream& out, const EnvConfig& config);
void write_trace_row(std::ostream& out, int episode, int step_index, const WorldState& before,
                     const Eigen::VectorXd& joint_action, const StepOutcome& outcome,
                     const EnvConfig& config);

}  // namespace safemaddpg
