#include "safemaddpg/maddpg.hpp"

#include <cmath>
#include <stdexcept>

namespace safemaddpg {

void TrainConfig::validate() const {
    if (n_episodes < 1) throw std::invalid_argument("train: n_episodes must be positive");
    if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("train: gamma must lie in (0,1)");
    if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("train: tau must lie in (0,1)");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
    if (actor_lr <= 0.0) throw std::invalid_argument("train: actor_lr must be positive");
    if (critic_lr <= 0.0) throw std::invalid_argument("train: critic_lr must be positive");
    if (noise_sigma_initial < 0.0 || noise_sigma_final < 0.0)
        throw std::invalid_argument("train: noise sigmas must be non-negative");
    if (buffer_capacity < static_cast<std::size_t>(batch_size))
        throw std::invalid_argument("train: buffer_capacity smaller than batch_size");
}

std::vector<AgentNets> init_agents(const EnvConfig& env, double actor_lr, double critic_lr, Rng& rng) {
    const int obs = env.obs_dim();
    const int critic_in = env.n_agents * obs + env.action_dim();
    std::vector<AgentNets> agents;
    agents.reserve(env.n_agents);
    for (int i = 0; i < env.n_agents; ++i) {
        AgentNets a;
        a.actor = init_mlp({obs, 100, 500, 2}, Activation::Relu, Activation::Tanh, rng);
        a.critic = init_mlp({critic_in, 100, 500, 1}, Activation::Relu, Activation::Identity, rng);
        a.target_actor = a.actor;
        a.target_critic = a.critic;
        a.actor_opt = make_adam_state(a.actor, actor_lr);
        a.critic_opt = make_adam_state(a.critic, critic_lr);
        agents.push_back(std::move(a));
    }
    return agents;
}

void ReplayBuffer::push(Transition t) {
    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
    } else {
        storage_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
    if (storage_.empty()) throw std::logic_error("replay buffer: cannot sample from an empty buffer");
    std::vector<const Transition*> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = &storage_[rng.below(storage_.size())];
    return out;
}

long TrainingLog::total_infeasible_steps() const {
    long n = 0;
    for (const auto& r : rows) n += r.infeasible_steps;
    return n;
}

long TrainingLog::episodes_with_infeasible_step() const {
    long n = 0;
    for (const auto& r : rows) n += r.infeasible_steps > 0 ? 1 : 0;
    return n;
}

Eigen::VectorXd select_actions(const std::vector<AgentNets>& agents,
                               const std::vector<Eigen::VectorXd>& observations) {
    if (agents.size() != observations.size())
        throw std::invalid_argument("select_actions: one observation per agent required");
    const long m = agents.empty() ? 0 : agents.front().actor.output_dim();
    Eigen::VectorXd joint(static_cast<long>(agents.size()) * m);
    for (std::size_t i = 0; i < agents.size(); ++i)
        joint.segment(static_cast<long>(i) * m, m) = forward(agents[i].actor, observations[i]);
    return joint;
}

Eigen::VectorXd apply_exploration_noise(const Eigen::VectorXd& action, double sigma, Rng& rng) {
    if (sigma < 0.0) throw std::invalid_argument("apply_exploration_noise: sigma must be non-negative");
    Eigen::VectorXd noisy = action;
    if (sigma > 0.0)
        for (long d = 0; d < noisy.size(); ++d) noisy(d) += rng.normal(0.0, sigma);
    return noisy.cwiseMax(-1.0).cwiseMin(1.0);
}

namespace {

struct BatchViews {
    Eigen::MatrixXd joint_states;      // B x (N*obs)
    Eigen::MatrixXd joint_actions;     // B x (N*m)
    Eigen::MatrixXd rewards;           // B x N
    Eigen::MatrixXd next_joint_states; // B x (N*obs)
};

BatchViews gather(const std::vector<const Transition*>& batch) {
    const long B = static_cast<long>(batch.size());
    BatchViews v;
    v.joint_states.resize(B, batch[0]->joint_state.size());
    v.joint_actions.resize(B, batch[0]->joint_action.size());
    v.rewards.resize(B, batch[0]->rewards.size());
    v.next_joint_states.resize(B, batch[0]->next_joint_state.size());
    for (long b = 0; b < B; ++b) {
        v.joint_states.row(b) = batch[b]->joint_state;
        v.joint_actions.row(b) = batch[b]->joint_action;
        v.rewards.row(b) = batch[b]->rewards;
        v.next_joint_states.row(b) = batch[b]->next_joint_state;
    }
    return v;
}

// target-policy actions on the next joint state, one block per agent
Eigen::MatrixXd target_actions(const std::vector<AgentNets>& agents, const Eigen::MatrixXd& next_joint_states,
                               int obs_dim) {
    const long B = next_joint_states.rows();
    const long m = agents.front().target_actor.output_dim();
    Eigen::MatrixXd a(B, static_cast<long>(agents.size()) * m);
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const Eigen::MatrixXd obs_i = next_joint_states.middleCols(static_cast<long>(i) * obs_dim, obs_dim);
        a.middleCols(static_cast<long>(i) * m, m) = forward_batch(agents[i].target_actor, obs_i);
    }
    return a;
}

}  // namespace

std::vector<double> critic_update(std::vector<AgentNets>& agents,
                                  const std::vector<const Transition*>& batch, double gamma,
                                  const EnvConfig& env) {
    if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
    const BatchViews v = gather(batch);
    const long B = v.joint_states.rows();
    const Eigen::MatrixXd a_tilde = target_actions(agents, v.next_joint_states, env.obs_dim());

    Eigen::MatrixXd next_input(B, v.next_joint_states.cols() + a_tilde.cols());
    next_input << v.next_joint_states, a_tilde;
    Eigen::MatrixXd input(B, v.joint_states.cols() + v.joint_actions.cols());
    input << v.joint_states, v.joint_actions;

    std::vector<double> losses(agents.size(), 0.0);
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const Eigen::VectorXd q_next = forward_batch(agents[i].target_critic, next_input).col(0);
        const Eigen::VectorXd z = v.rewards.col(i) + gamma * q_next;
        BatchTrace trace;
        const Eigen::VectorXd q = forward_batch(agents[i].critic, input, trace).col(0);
        const Eigen::VectorXd err = q - z;
        losses[i] = err.squaredNorm() / static_cast<double>(B);
        const Eigen::MatrixXd upstream = (2.0 / static_cast<double>(B)) * err;
        BatchGrads grads = backward_batch(agents[i].critic, trace, upstream, true, false);
        adam_step_batch(agents[i].critic, grads, agents[i].critic_opt);
    }
    return losses;
}

std::vector<double> actor_update(std::vector<AgentNets>& agents,
                                 const std::vector<const Transition*>& batch, const EnvConfig& env) {
    if (batch.empty()) throw std::invalid_argument("actor_update: empty batch");
    const BatchViews v = gather(batch);
    const long B = v.joint_states.rows();
    const int obs = env.obs_dim();
    const long state_width = v.joint_states.cols();

    std::vector<double> grad_norms(agents.size(), 0.0);
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const long m = agents[i].actor.output_dim();
        const Eigen::MatrixXd obs_i = v.joint_states.middleCols(static_cast<long>(i) * obs, obs);
        BatchTrace actor_trace;
        const Eigen::MatrixXd a_i = forward_batch(agents[i].actor, obs_i, actor_trace);

        Eigen::MatrixXd actions = v.joint_actions;
        actions.middleCols(static_cast<long>(i) * m, m) = a_i;
        Eigen::MatrixXd input(B, state_width + actions.cols());
        input << v.joint_states, actions;

        BatchTrace critic_trace;
        forward_batch(agents[i].critic, input, critic_trace);
        // dJ/dQ = 1/B per sample; only input gradients are needed here
        const Eigen::MatrixXd upstream = Eigen::MatrixXd::Constant(B, 1, 1.0 / static_cast<double>(B));
        BatchGrads critic_grads = backward_batch(agents[i].critic, critic_trace, upstream, false, true);
        const Eigen::MatrixXd dq_da =
            critic_grads.input_grads.middleCols(state_width + static_cast<long>(i) * m, m);

        BatchGrads actor_grads = backward_batch(agents[i].actor, actor_trace, dq_da, true, false);
        double sq = 0.0;
        for (auto& g : actor_grads.weight_grads) {
            sq += g.squaredNorm();
            g = -g;  // ascend on J
        }
        for (auto& g : actor_grads.bias_grads) {
            sq += g.squaredNorm();
            g = -g;
        }
        grad_norms[i] = std::sqrt(sq);
        adam_step_batch(agents[i].actor, actor_grads, agents[i].actor_opt);
    }
    return grad_norms;
}

void soft_update_targets(std::vector<AgentNets>& agents, double tau) {
    for (auto& a : agents) {
        for (int l = 0; l < a.actor.n_layers(); ++l) {
            a.target_actor.weights[l] = tau * a.actor.weights[l] + (1.0 - tau) * a.target_actor.weights[l];
            a.target_actor.biases[l] = tau * a.actor.biases[l] + (1.0 - tau) * a.target_actor.biases[l];
        }
        for (int l = 0; l < a.critic.n_layers(); ++l) {
            a.target_critic.weights[l] = tau * a.critic.weights[l] + (1.0 - tau) * a.target_critic.weights[l];
            a.target_critic.biases[l] = tau * a.critic.biases[l] + (1.0 - tau) * a.target_critic.biases[l];
        }
    }
}

double noise_sigma_for_episode(const TrainConfig& config, int episode) {
    const double half = 0.5 * static_cast<double>(config.n_episodes);
    const double frac = half <= 0.0 ? 1.0 : std::min(1.0, static_cast<double>(episode) / half);
    return config.noise_sigma_initial + frac * (config.noise_sigma_final - config.noise_sigma_initial);
}

ActionPipelineResult compute_applied_action(const std::vector<AgentNets>& agents,
                                            const std::vector<Eigen::VectorXd>& observations,
                                            const Eigen::VectorXd& joint_state,
                                            const Eigen::VectorXd& cvals, const SensitivityModel* model,
                                            const ProjectionMode& mode, double sigma, Rng& rng) {
    ActionPipelineResult r;
    r.proposal = select_actions(agents, observations);
    if (mode.kind != ProjectionKind::Off && model == nullptr)
        throw std::invalid_argument("projection requested but no sensitivity model provided");
    static const SensitivityModel empty_model;
    r.projection = project(r.proposal, joint_state, cvals, model ? *model : empty_model, mode);
    r.applied = apply_exploration_noise(r.projection.applied_action, sigma, rng);
    return r;
}

namespace {

EpisodeRow run_episode(std::vector<AgentNets>& agents, const EnvConfig& env_config,
                       const TrainConfig* train_config, ReplayBuffer* buffer,
                       const SensitivityModel* model, const ProjectionMode& mode, double sigma,
                       int episode_index, long cumulative_collisions, Rng& rng) {
    WorldState state = reset(env_config, rng);
    EpisodeRow row;
    row.episode = episode_index;
    row.agent_rewards = Eigen::VectorXd::Zero(env_config.n_agents);
    row.noise_sigma = sigma;
    double slack_sum = 0.0;

    for (int t = 0; t < env_config.episode_length; ++t) {
        std::vector<Eigen::VectorXd> obs(env_config.n_agents);
        for (int i = 0; i < env_config.n_agents; ++i) obs[i] = observe(state, i, env_config);
        Eigen::VectorXd joint_state(env_config.n_agents * env_config.obs_dim());
        for (int i = 0; i < env_config.n_agents; ++i)
            joint_state.segment(static_cast<long>(i) * env_config.obs_dim(), env_config.obs_dim()) = obs[i];
        const Eigen::VectorXd cvals = constraint_values(state, env_config);

        ActionPipelineResult act =
            compute_applied_action(agents, obs, joint_state, cvals, model, mode, sigma, rng);
        StepOutcome out = step(state, act.applied, env_config, rng);

        row.agent_rewards += out.rewards;
        row.collisions += out.collisions;
        row.infeasible_steps += act.projection.feasible ? 0 : 1;
        slack_sum += act.projection.slack.size() ? act.projection.slack.cwiseAbs().sum() : 0.0;

        if (buffer != nullptr && train_config != nullptr) {
            Transition tr;
            tr.joint_state = joint_state;
            tr.joint_action = act.applied;
            tr.rewards = out.rewards;
            tr.next_joint_state = joint_observation(out.next, env_config);
            tr.constraint_values = cvals;
            tr.next_constraint_values = constraint_values(out.next, env_config);
            buffer->push(std::move(tr));

            if (buffer->size() >= static_cast<std::size_t>(train_config->batch_size)) {
                const auto batch = buffer->sample(train_config->batch_size, rng);
                critic_update(agents, batch, train_config->gamma, env_config);
                actor_update(agents, batch, env_config);
                soft_update_targets(agents, train_config->tau);
            }
        }
        state = std::move(out.next);
    }
    row.mean_reward = row.agent_rewards.mean();
    row.cumulative_collisions = cumulative_collisions + row.collisions;
    row.mean_slack = slack_sum / static_cast<double>(env_config.episode_length);
    return row;
}

}  // namespace

TrainResult train(const TrainConfig& config, const EnvConfig& env_config, const SensitivityModel* model,
                  const EpisodeCallback& on_episode_end) {
    config.validate();
    env_config.validate();
    if (config.projection.kind != ProjectionKind::Off && model == nullptr)
        throw std::invalid_argument("train: projection enabled but no sensitivity model given");

    Rng rng(config.seed);
    TrainResult result;
    result.agents = init_agents(env_config, config.actor_lr, config.critic_lr, rng);
    ReplayBuffer buffer(config.buffer_capacity);

    long cumulative = 0;
    for (int ep = 0; ep < config.n_episodes; ++ep) {
        const double sigma = noise_sigma_for_episode(config, ep);
        EpisodeRow row = run_episode(result.agents, env_config, &config, &buffer, model, config.projection,
                                     sigma, ep, cumulative, rng);
        cumulative = row.cumulative_collisions;
        result.log.rows.push_back(std::move(row));
        if (on_episode_end) on_episode_end(ep, result.agents);
    }
    return result;
}

TrainingLog evaluate(const std::vector<AgentNets>& agents, const EnvConfig& env_config, int episodes,
                     const ProjectionMode& mode, const SensitivityModel* model, Rng& rng) {
    TrainingLog log;
    std::vector<AgentNets> local = agents;  // run_episode never updates without a buffer
    long cumulative = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        EpisodeRow row =
            run_episode(local, env_config, nullptr, nullptr, model, mode, 0.0, ep, cumulative, rng);
        cumulative = row.cumulative_collisions;
        log.rows.push_back(std::move(row));
    }
    return log;
}

}  // namespace safemaddpg
