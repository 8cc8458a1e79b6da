#pragma once

#include <filesystem>
#include <vector>

#include "safemaddpg/mlp.hpp"
#include "safemaddpg/particle_env.hpp"
#include "safemaddpg/projection.hpp"

namespace safemaddpg {

/// Single-step transition data gathered under a uniform random policy;
/// constraint values are cached for both endpoints so sensitivity
/// training never re-simulates.
struct DatasetD {
    struct Record {
        Eigen::VectorXd joint_state;              // n_agents * obs_dim
        Eigen::VectorXd joint_action;             // n_agents * 2
        Eigen::VectorXd constraint_values;        // K, at x
        Eigen::VectorXd next_constraint_values;   // K, at x'
    };
    std::vector<Record> records;
};

DatasetD collect_dataset(const EnvConfig& env_config, int n_episodes, Rng& rng);

struct SensitivityTrainConfig {
    int batch_size = 256;
    double learning_rate = 1e-3;
    int epochs = 50;
    double holdout_fraction = 0.1;
    int hidden_units = 10;
    void validate() const;
};

/// One network per constraint, each mapping the flattened joint
/// observation to a sensitivity vector of the joint action's dimension.
struct SensitivityModel {
    std::vector<Mlp> networks;

    int n_constraints() const { return static_cast<int>(networks.size()); }
};

SensitivityModel init_sensitivity_model(int n_constraints, int state_dim, int action_dim, int hidden_units,
                                        Rng& rng);

struct ConstraintTrainStats {
    std::vector<double> epoch_losses;  // train-set residual sum at each epoch start
    double final_train_loss = 0.0;     // residual sum after the last epoch
    double holdout_mse = 0.0;
    double holdout_mean_abs_error = 0.0;
};

struct SensitivityTrainReport {
    std::vector<ConstraintTrainStats> per_constraint;
};

/// Fits each constraint network to the one-step constraint change:
/// residual = c_j(x') - c_j(x) - g_j(x)'a, squared and summed over the
/// training split. Mini-batch Adam, shuffled each epoch.
SensitivityTrainReport train_sensitivity(const DatasetD& dataset, SensitivityModel& model,
                                         const SensitivityTrainConfig& config, Rng& rng);

/// Linearized safety signal: c_j(x) + g_j(x)'a.
double predict_constraint(const SensitivityModel& model, int j, const Eigen::VectorXd& joint_state,
                          const Eigen::VectorXd& joint_action, double constraint_value);

enum class ProjectionKind { Off, Hard, Soft };

std::string projection_kind_name(ProjectionKind k);
ProjectionKind projection_kind_from_name(const std::string& name);

struct ProjectionMode {
    ProjectionKind kind = ProjectionKind::Off;
    double rho = 1000.0;
    // standoff added to every constraint threshold; absorbs the one-step
    // model's irreducible error (it cannot see velocity drift) so that
    // filtered pairs ride the tightened boundary, not the collision one
    double margin_tightening = 0.08;
};

struct ProjectionResult {
    Eigen::VectorXd applied_action;
    Eigen::VectorXd slack;   // zeros unless soft
    bool feasible = true;    // false only when the hard QP has no solution
};

/// Central safety filter. Off passes the clamped proposal through; hard
/// projects onto the linearized constraint set and falls back to the
/// clamped proposal when that set is empty; soft always solves.
ProjectionResult project(const Eigen::VectorXd& proposed_joint_action, const Eigen::VectorXd& joint_state,
                         const Eigen::VectorXd& constraint_values, const SensitivityModel& model,
                         const ProjectionMode& mode, double action_bound = 1.0);

/// Checkpoint directory: manifest.txt plus one nn-core checkpoint per
/// constraint (constraint_00.mlp, ...). The manifest lists the agent
/// pair behind every constraint index.
void save_sensitivity_model(const SensitivityModel& model, int n_agents, const std::filesystem::path& dir);
SensitivityModel load_sensitivity_model(const std::filesystem::path& dir);

}  // namespace safemaddpg
