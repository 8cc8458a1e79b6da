#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "safemaddpg/mlp.hpp"
#include "safemaddpg/particle_env.hpp"
#include "safemaddpg/safety_layer.hpp"

namespace safemaddpg {

/// Actor/critic pair with target copies and optimizer state for one
/// agent. Critics are centralized: they see the joint observation and
/// joint action; actors see only the agent's own observation.
struct AgentNets {
    Mlp actor, critic;
    Mlp target_actor, target_critic;
    AdamState actor_opt, critic_opt;
};

std::vector<AgentNets> init_agents(const EnvConfig& env, double actor_lr, double critic_lr, Rng& rng);

struct Transition {
    Eigen::VectorXd joint_state;
    Eigen::VectorXd joint_action;   // the action actually applied
    Eigen::VectorXd rewards;
    Eigen::VectorXd next_joint_state;
    Eigen::VectorXd constraint_values;
    Eigen::VectorXd next_constraint_values;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

    void push(Transition t);
    std::size_t size() const { return storage_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& at(std::size_t i) const { return storage_[i]; }

    /// I.i.d. uniform sample (with replacement) of `count` transitions.
    std::vector<const Transition*> sample(std::size_t count, Rng& rng) const;

private:
    std::size_t capacity_;
    std::size_t cursor_ = 0;
    std::vector<Transition> storage_;
};

struct TrainConfig {
    int n_episodes = 1500;
    double gamma = 0.95;
    double tau = 0.01;
    int batch_size = 256;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double noise_sigma_initial = 0.15;
    double noise_sigma_final = 0.02;
    std::size_t buffer_capacity = 1'000'000;
    ProjectionMode projection;
    std::uint64_t seed = 1;
    void validate() const;
};

struct EpisodeRow {
    int episode = 0;
    double mean_reward = 0.0;
    Eigen::VectorXd agent_rewards;
    int collisions = 0;
    long cumulative_collisions = 0;
    int infeasible_steps = 0;
    double mean_slack = 0.0;   // per-step average of |slack|_1
    double noise_sigma = 0.0;
};

struct TrainingLog {
    std::vector<EpisodeRow> rows;
    long total_collisions() const { return rows.empty() ? 0 : rows.back().cumulative_collisions; }
    long total_infeasible_steps() const;
    long episodes_with_infeasible_step() const;
};

/// Actor forward passes on per-agent observations, concatenated in
/// agent order.
Eigen::VectorXd select_actions(const std::vector<AgentNets>& agents,
                               const std::vector<Eigen::VectorXd>& observations);

/// Additive Gaussian exploration noise, clamped back into [-1, 1].
Eigen::VectorXd apply_exploration_noise(const Eigen::VectorXd& action, double sigma, Rng& rng);

/// One TD-regression Adam step per critic; returns each agent's mean
/// squared TD error before the step. Targets use the target actors and
/// target critics on the next state; the regression input uses the
/// stored joint action.
std::vector<double> critic_update(std::vector<AgentNets>& agents,
                                  const std::vector<const Transition*>& batch, double gamma,
                                  const EnvConfig& env);

/// Deterministic policy-gradient ascent step per actor; returns each
/// agent's gradient norm.
std::vector<double> actor_update(std::vector<AgentNets>& agents,
                                 const std::vector<const Transition*>& batch, const EnvConfig& env);

void soft_update_targets(std::vector<AgentNets>& agents, double tau);

/// Linear decay from noise_sigma_initial to noise_sigma_final over the
/// first half of training, constant afterwards.
double noise_sigma_for_episode(const TrainConfig& config, int episode);

/// select -> project -> noise, the per-step action pipeline. The
/// returned action is exactly what gets applied and stored.
struct ActionPipelineResult {
    Eigen::VectorXd proposal;
    ProjectionResult projection;
    Eigen::VectorXd applied;
};
ActionPipelineResult compute_applied_action(const std::vector<AgentNets>& agents,
                                            const std::vector<Eigen::VectorXd>& observations,
                                            const Eigen::VectorXd& joint_state,
                                            const Eigen::VectorXd& cvals, const SensitivityModel* model,
                                            const ProjectionMode& mode, double sigma, Rng& rng);

struct TrainResult {
    std::vector<AgentNets> agents;
    TrainingLog log;
};

using EpisodeCallback = std::function<void(int episode, const std::vector<AgentNets>&)>;

/// Full training loop; deterministic given (configs, seed). The
/// sensitivity model is required unless projection is off.
TrainResult train(const TrainConfig& config, const EnvConfig& env_config, const SensitivityModel* model,
                  const EpisodeCallback& on_episode_end = nullptr);

/// Greedy (noise-free) evaluation episodes with the given projection
/// mode; networks are not updated.
TrainingLog evaluate(const std::vector<AgentNets>& agents, const EnvConfig& env_config, int episodes,
                     const ProjectionMode& mode, const SensitivityModel* model, Rng& rng);

}  // namespace safemaddpg
