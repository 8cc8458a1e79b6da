#include "safemaddpg/safety_layer.hpp"

#include <fstream>
#include <numeric>
#include <stdexcept>

#include "safemaddpg/checkpoint.hpp"

namespace safemaddpg {

void SensitivityTrainConfig::validate() const {
    if (batch_size < 1) throw std::invalid_argument("sensitivity: batch_size must be positive");
    if (learning_rate <= 0.0) throw std::invalid_argument("sensitivity: learning_rate must be positive");
    if (epochs < 1) throw std::invalid_argument("sensitivity: epochs must be positive");
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
        throw std::invalid_argument("sensitivity: holdout_fraction must lie in [0,1)");
    if (hidden_units < 1) throw std::invalid_argument("sensitivity: hidden_units must be positive");
}

DatasetD collect_dataset(const EnvConfig& env_config, int n_episodes, Rng& rng) {
    if (n_episodes < 1) throw std::invalid_argument("collect_dataset: n_episodes must be at least 1");
    DatasetD data;
    data.records.reserve(static_cast<std::size_t>(n_episodes) * env_config.episode_length);
    const int adim = env_config.action_dim();
    for (int ep = 0; ep < n_episodes; ++ep) {
        WorldState state = reset(env_config, rng);
        for (int t = 0; t < env_config.episode_length; ++t) {
            Eigen::VectorXd action(adim);
            for (int d = 0; d < adim; ++d) action(d) = rng.uniform(-1.0, 1.0);
            DatasetD::Record rec;
            rec.joint_state = joint_observation(state, env_config);
            rec.joint_action = action;
            rec.constraint_values = constraint_values(state, env_config);
            StepOutcome out = step(state, action, env_config, rng);
            rec.next_constraint_values = constraint_values(out.next, env_config);
            data.records.push_back(std::move(rec));
            state = std::move(out.next);
        }
    }
    return data;
}

SensitivityModel init_sensitivity_model(int n_constraints, int state_dim, int action_dim, int hidden_units,
                                        Rng& rng) {
    SensitivityModel model;
    model.networks.reserve(n_constraints);
    for (int j = 0; j < n_constraints; ++j)
        model.networks.push_back(
            init_mlp({state_dim, hidden_units, action_dim}, Activation::Relu, Activation::Identity, rng));
    return model;
}

namespace {

// residual sum of Eq.-style squared errors over a set of record indices
double residual_sum(const Mlp& net, int j, const DatasetD& data, const std::vector<std::size_t>& idx,
                    double* mean_abs) {
    double sum = 0.0, abs_sum = 0.0;
    for (std::size_t id : idx) {
        const auto& rec = data.records[id];
        const double pred = forward(net, rec.joint_state).dot(rec.joint_action);
        const double target = rec.next_constraint_values(j) - rec.constraint_values(j);
        const double r = target - pred;
        sum += r * r;
        abs_sum += std::abs(r);
    }
    if (mean_abs) *mean_abs = idx.empty() ? 0.0 : abs_sum / static_cast<double>(idx.size());
    return sum;
}

}  // namespace

SensitivityTrainReport train_sensitivity(const DatasetD& dataset, SensitivityModel& model,
                                         const SensitivityTrainConfig& config, Rng& rng) {
    config.validate();
    if (dataset.records.empty()) throw std::invalid_argument("train_sensitivity: dataset is empty");
    const std::size_t n = dataset.records.size();
    const std::size_t n_holdout = static_cast<std::size_t>(config.holdout_fraction * static_cast<double>(n));
    const std::size_t n_train = n - n_holdout;
    if (n_train == 0) throw std::invalid_argument("train_sensitivity: holdout leaves no training data");

    // one shared shuffled split, then per-epoch reshuffles of the train part
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i + 1))]);
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
    std::vector<std::size_t> holdout_idx(order.begin() + n_train, order.end());

    const long state_dim = dataset.records.front().joint_state.size();
    const long action_dim = dataset.records.front().joint_action.size();

    SensitivityTrainReport report;
    report.per_constraint.resize(model.networks.size());

    for (std::size_t j = 0; j < model.networks.size(); ++j) {
        Mlp& net = model.networks[j];
        if (net.input_dim() != state_dim || net.output_dim() != action_dim)
            throw std::invalid_argument("train_sensitivity: network shape does not match dataset");
        AdamState opt = make_adam_state(net, config.learning_rate);
        ConstraintTrainStats& stats = report.per_constraint[j];

        std::vector<std::size_t> perm = train_idx;
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            stats.epoch_losses.push_back(residual_sum(net, static_cast<int>(j), dataset, train_idx, nullptr));
            for (std::size_t i = perm.size() - 1; i > 0; --i)
                std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
            for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
                const std::size_t count = std::min<std::size_t>(config.batch_size, perm.size() - start);
                Eigen::MatrixXd states(count, state_dim);
                Eigen::MatrixXd actions(count, action_dim);
                Eigen::VectorXd targets(count);
                for (std::size_t b = 0; b < count; ++b) {
                    const auto& rec = dataset.records[perm[start + b]];
                    states.row(b) = rec.joint_state;
                    actions.row(b) = rec.joint_action;
                    targets(b) = rec.next_constraint_values(j) - rec.constraint_values(j);
                }
                BatchTrace trace;
                const Eigen::MatrixXd outputs = forward_batch(net, states, trace);
                const Eigen::VectorXd preds = (outputs.array() * actions.array()).rowwise().sum();
                // d/d(output) of mean squared residual: -2 r a / count
                const Eigen::VectorXd resid = targets - preds;
                Eigen::MatrixXd upstream =
                    (actions.array().colwise() * resid.array()) * (-2.0 / static_cast<double>(count));
                BatchGrads grads = backward_batch(net, trace, upstream, true, false);
                adam_step_batch(net, grads, opt);
            }
        }
        stats.final_train_loss = residual_sum(net, static_cast<int>(j), dataset, train_idx, nullptr);
        if (!holdout_idx.empty()) {
            double mean_abs = 0.0;
            const double ss = residual_sum(net, static_cast<int>(j), dataset, holdout_idx, &mean_abs);
            stats.holdout_mse = ss / static_cast<double>(holdout_idx.size());
            stats.holdout_mean_abs_error = mean_abs;
        }
    }
    return report;
}

double predict_constraint(const SensitivityModel& model, int j, const Eigen::VectorXd& joint_state,
                          const Eigen::VectorXd& joint_action, double constraint_value) {
    if (j < 0 || j >= model.n_constraints()) throw std::out_of_range("predict_constraint: index out of range");
    return constraint_value + forward(model.networks[j], joint_state).dot(joint_action);
}

std::string projection_kind_name(ProjectionKind k) {
    switch (k) {
        case ProjectionKind::Off: return "off";
        case ProjectionKind::Hard: return "hard";
        case ProjectionKind::Soft: return "soft";
    }
    return "off";
}

ProjectionKind projection_kind_from_name(const std::string& name) {
    if (name == "off") return ProjectionKind::Off;
    if (name == "hard") return ProjectionKind::Hard;
    if (name == "soft") return ProjectionKind::Soft;
    throw std::invalid_argument("unknown projection kind: " + name);
}

ProjectionResult project(const Eigen::VectorXd& proposed_joint_action, const Eigen::VectorXd& joint_state,
                         const Eigen::VectorXd& cvals, const SensitivityModel& model,
                         const ProjectionMode& mode, double action_bound) {
    ProjectionResult result;
    const long adim = proposed_joint_action.size();
    const Eigen::VectorXd clamped = proposed_joint_action.cwiseMax(-action_bound).cwiseMin(action_bound);

    if (mode.kind == ProjectionKind::Off) {
        result.applied_action = clamped;
        result.slack = Eigen::VectorXd::Zero(cvals.size());
        result.feasible = true;
        return result;
    }

    const int k = model.n_constraints();
    if (k != cvals.size()) throw std::invalid_argument("project: model/constraint count mismatch");
    ProjectionSpec spec;
    spec.proposed_action = clamped;
    spec.constraint_sensitivities.resize(k, adim);
    for (int j = 0; j < k; ++j)
        spec.constraint_sensitivities.row(j) = forward(model.networks[j], joint_state).transpose();
    spec.constraint_margins = -cvals.array() - mode.margin_tightening;  // C_j = 0
    spec.action_bound = action_bound;
    spec.rho = mode.rho;

    if (mode.kind == ProjectionKind::Hard) {
        const QpSolution sol = solve_qp(build_hard_projection(spec));
        if (sol.status == QpStatus::Optimal) {
            result.applied_action = sol.primal;
            result.feasible = true;
        } else {
            result.applied_action = clamped;
            result.feasible = false;
        }
        result.slack = Eigen::VectorXd::Zero(k);
        return result;
    }

    const QpSolution sol = solve_qp(build_soft_projection(spec));
    if (sol.status != QpStatus::Optimal)
        throw std::runtime_error("project: soft projection reported infeasible");
    auto [action, slack] = extract_action(sol, adim);
    result.applied_action = std::move(action);
    result.slack = std::move(slack);
    result.feasible = true;
    return result;
}

void save_sensitivity_model(const SensitivityModel& model, int n_agents, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("sensitivity checkpoint: cannot write manifest");
    manifest << "sensitivity-model v1\n";
    manifest << "constraints " << model.n_constraints() << '\n';
    manifest << "agents " << n_agents << '\n';
    for (int j = 0; j < model.n_constraints(); ++j) {
        const auto [i, k] = constraint_pair(j, n_agents);
        char name[32];
        std::snprintf(name, sizeof(name), "constraint_%02d.mlp", j);
        manifest << name << " pair " << i << ' ' << k << '\n';
        save_mlp(model.networks[j], dir / name);
    }
}

SensitivityModel load_sensitivity_model(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) throw std::runtime_error("sensitivity checkpoint: missing manifest in " + dir.string());
    std::string magic, version, key;
    int k = 0, n_agents = 0;
    manifest >> magic >> version;
    if (magic != "sensitivity-model" || version != "v1")
        throw std::runtime_error("sensitivity checkpoint: bad manifest header");
    manifest >> key >> k;
    if (key != "constraints" || k <= 0) throw std::runtime_error("sensitivity checkpoint: bad constraint count");
    manifest >> key >> n_agents;
    if (key != "agents") throw std::runtime_error("sensitivity checkpoint: bad agent count");

    SensitivityModel model;
    for (int j = 0; j < k; ++j) {
        char name[32];
        std::snprintf(name, sizeof(name), "constraint_%02d.mlp", j);
        model.networks.push_back(load_mlp(dir / name));
    }
    return model;
}

}  // namespace safemaddpg
