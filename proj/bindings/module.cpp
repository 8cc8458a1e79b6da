#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "safemaddpg/checkpoint.hpp"
#include "safemaddpg/experiment.hpp"

namespace py = pybind11;
using namespace safemaddpg;

namespace {

// python-side rng handle; every stochastic entry point takes one
struct PyRng {
    explicit PyRng(std::uint64_t seed) : rng(seed) {}
    Rng rng;
};

}  // namespace

PYBIND11_MODULE(_safemaddpg, m) {
    m.doc() = "QP-filtered multi-agent deterministic policy gradients on a 2-D particle world";

    py::class_<PyRng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def("uniform", [](PyRng& r) { return r.rng.uniform(); })
        .def("normal", [](PyRng& r) { return r.rng.normal(); });

    // ---- neural network core
    py::enum_<Activation>(m, "Activation")
        .value("relu", Activation::Relu)
        .value("identity", Activation::Identity)
        .value("tanh", Activation::Tanh);

    py::class_<Mlp>(m, "Mlp")
        .def_readonly("layer_dims", &Mlp::layer_dims)
        .def_readwrite("weights", &Mlp::weights)
        .def_readwrite("biases", &Mlp::biases)
        .def_readonly("hidden_activation", &Mlp::hidden_activation)
        .def_readonly("output_activation", &Mlp::output_activation)
        .def("parameter_count", &Mlp::parameter_count);

    py::class_<GradBundle>(m, "GradBundle")
        .def_readonly("weight_grads", &GradBundle::weight_grads)
        .def_readonly("bias_grads", &GradBundle::bias_grads)
        .def_readonly("input_grad", &GradBundle::input_grad);

    py::class_<GradCheckReport>(m, "GradCheckReport")
        .def_readonly("passed", &GradCheckReport::pass)
        .def_readonly("max_relative_deviation", &GradCheckReport::max_relative_deviation)
        .def_readonly("probes_checked", &GradCheckReport::probes_checked);

    m.def("init_mlp",
          [](const std::vector<int>& dims, Activation hidden, Activation output, PyRng& rng) {
              return init_mlp(dims, hidden, output, rng.rng);
          },
          py::arg("layer_dims"), py::arg("hidden_activation"), py::arg("output_activation"), py::arg("rng"));
    m.def("forward", &forward, py::arg("mlp"), py::arg("input"));
    m.def("backward", &backward, py::arg("mlp"), py::arg("input"), py::arg("upstream_grad"));
    m.def("grad_check",
          [](const Mlp& mlp, const Eigen::VectorXd& input, double tol) { return grad_check(mlp, input, tol); },
          py::arg("mlp"), py::arg("input"), py::arg("tolerance"));
    m.def("save_mlp", [](const Mlp& mlp, const std::filesystem::path& p) { save_mlp(mlp, p); });
    m.def("load_mlp", [](const std::filesystem::path& p) { return load_mlp(p); });

    // ---- particle environment
    py::enum_<StressMode>(m, "StressMode")
        .value("none", StressMode::None)
        .value("ed", StressMode::Ed)
        .value("ui", StressMode::Ui);

    py::class_<EnvConfig>(m, "EnvConfig")
        .def(py::init<>())
        .def_readwrite("n_agents", &EnvConfig::n_agents)
        .def_readwrite("dt", &EnvConfig::dt)
        .def_readwrite("damping", &EnvConfig::damping)
        .def_readwrite("mass", &EnvConfig::mass)
        .def_readwrite("arena_half_width", &EnvConfig::arena_half_width)
        .def_readwrite("collision_distance", &EnvConfig::collision_distance)
        .def_readwrite("collision_penalty", &EnvConfig::collision_penalty)
        .def_readwrite("episode_length", &EnvConfig::episode_length)
        .def_readwrite("disturbance_half_width", &EnvConfig::disturbance_half_width)
        .def_readwrite("stress_mode", &EnvConfig::stress_mode)
        .def("n_constraints", &EnvConfig::n_constraints)
        .def("obs_dim", &EnvConfig::obs_dim)
        .def("action_dim", &EnvConfig::action_dim);

    py::class_<WorldState>(m, "WorldState")
        .def_readwrite("positions", &WorldState::positions)
        .def_readwrite("velocities", &WorldState::velocities)
        .def_readwrite("targets", &WorldState::targets)
        .def_readwrite("step_index", &WorldState::step_index);

    py::class_<StepOutcome>(m, "StepOutcome")
        .def_readonly("next", &StepOutcome::next)
        .def_readonly("rewards", &StepOutcome::rewards)
        .def_readonly("collisions", &StepOutcome::collisions);

    m.def("reset", [](const EnvConfig& c, PyRng& rng) { return reset(c, rng.rng); }, py::arg("config"),
          py::arg("rng"));
    m.def("step",
          [](const WorldState& s, const Eigen::VectorXd& a, const EnvConfig& c, PyRng& rng) {
              return step(s, a, c, rng.rng);
          },
          py::arg("state"), py::arg("joint_action"), py::arg("config"), py::arg("rng"));
    m.def("observe", &observe, py::arg("state"), py::arg("agent_index"), py::arg("config"));
    m.def("joint_observation", &joint_observation, py::arg("state"), py::arg("config"));
    m.def("constraint_values", &constraint_values, py::arg("state"), py::arg("config"));
    m.def("constraint_pair", &constraint_pair, py::arg("j"), py::arg("n_agents"));
    m.def("count_collisions", &count_collisions, py::arg("state"), py::arg("config"));

    // ---- quadratic programming
    py::enum_<QpStatus>(m, "QpStatus")
        .value("optimal", QpStatus::Optimal)
        .value("infeasible", QpStatus::Infeasible);

    py::class_<QpProblem>(m, "QpProblem")
        .def(py::init<>())
        .def_readwrite("hessian", &QpProblem::hessian)
        .def_readwrite("linear_cost", &QpProblem::linear_cost)
        .def_readwrite("ineq_matrix", &QpProblem::ineq_matrix)
        .def_readwrite("ineq_rhs", &QpProblem::ineq_rhs)
        .def("dump", [](const QpProblem& p) {
            std::ostringstream out;
            dump_problem(p, out);
            return out.str();
        });

    py::class_<QpSolution>(m, "QpSolution")
        .def_readonly("primal", &QpSolution::primal)
        .def_readonly("dual", &QpSolution::dual)
        .def_readonly("status", &QpSolution::status)
        .def_readonly("active_set", &QpSolution::active_set)
        .def_readonly("objective", &QpSolution::objective)
        .def_readonly("iterations", &QpSolution::iterations);

    py::class_<KktResiduals>(m, "KktResiduals")
        .def_readonly("stationarity", &KktResiduals::stationarity)
        .def_readonly("primal_feasibility", &KktResiduals::primal_feasibility)
        .def_readonly("dual_feasibility", &KktResiduals::dual_feasibility)
        .def_readonly("complementary_slackness", &KktResiduals::complementary_slackness);

    m.def("solve_qp", &solve_qp, py::arg("problem"), py::arg("tolerance") = 1e-10);
    m.def("kkt_residuals", &kkt_residuals, py::arg("problem"), py::arg("solution"));
    m.def("kkt_ok", &kkt_ok, py::arg("problem"), py::arg("solution"));

    py::class_<ProjectionSpec>(m, "ProjectionSpec")
        .def(py::init<>())
        .def_readwrite("proposed_action", &ProjectionSpec::proposed_action)
        .def_readwrite("constraint_sensitivities", &ProjectionSpec::constraint_sensitivities)
        .def_readwrite("constraint_margins", &ProjectionSpec::constraint_margins)
        .def_readwrite("action_bound", &ProjectionSpec::action_bound)
        .def_readwrite("rho", &ProjectionSpec::rho)
        .def_readwrite("slack_reg", &ProjectionSpec::slack_reg);

    m.def("build_hard_projection", &build_hard_projection, py::arg("spec"));
    m.def("build_soft_projection", &build_soft_projection, py::arg("spec"));
    m.def("extract_action", &extract_action, py::arg("solution"), py::arg("n_action_dims"));

    // ---- safety layer
    py::class_<DatasetD::Record>(m, "DatasetRecord")
        .def_readonly("joint_state", &DatasetD::Record::joint_state)
        .def_readonly("joint_action", &DatasetD::Record::joint_action)
        .def_readonly("constraint_values", &DatasetD::Record::constraint_values)
        .def_readonly("next_constraint_values", &DatasetD::Record::next_constraint_values);

    py::class_<DatasetD>(m, "DatasetD")
        .def_readonly("records", &DatasetD::records)
        .def("__len__", [](const DatasetD& d) { return d.records.size(); });

    m.def("collect_dataset",
          [](const EnvConfig& env, int episodes, PyRng& rng) { return collect_dataset(env, episodes, rng.rng); },
          py::arg("env_config"), py::arg("n_episodes"), py::arg("rng"));

    py::class_<SensitivityTrainConfig>(m, "SensitivityTrainConfig")
        .def(py::init<>())
        .def_readwrite("batch_size", &SensitivityTrainConfig::batch_size)
        .def_readwrite("learning_rate", &SensitivityTrainConfig::learning_rate)
        .def_readwrite("epochs", &SensitivityTrainConfig::epochs)
        .def_readwrite("holdout_fraction", &SensitivityTrainConfig::holdout_fraction)
        .def_readwrite("hidden_units", &SensitivityTrainConfig::hidden_units);

    py::class_<SensitivityModel>(m, "SensitivityModel")
        .def_readwrite("networks", &SensitivityModel::networks)
        .def("n_constraints", &SensitivityModel::n_constraints);

    py::class_<ConstraintTrainStats>(m, "ConstraintTrainStats")
        .def_readonly("epoch_losses", &ConstraintTrainStats::epoch_losses)
        .def_readonly("final_train_loss", &ConstraintTrainStats::final_train_loss)
        .def_readonly("holdout_mse", &ConstraintTrainStats::holdout_mse)
        .def_readonly("holdout_mean_abs_error", &ConstraintTrainStats::holdout_mean_abs_error);

    py::class_<SensitivityTrainReport>(m, "SensitivityTrainReport")
        .def_readonly("per_constraint", &SensitivityTrainReport::per_constraint);

    m.def("init_sensitivity_model",
          [](int k, int state_dim, int action_dim, int hidden, PyRng& rng) {
              return init_sensitivity_model(k, state_dim, action_dim, hidden, rng.rng);
          },
          py::arg("n_constraints"), py::arg("state_dim"), py::arg("action_dim"), py::arg("hidden_units"),
          py::arg("rng"));
    m.def("train_sensitivity",
          [](const DatasetD& data, SensitivityModel& model, const SensitivityTrainConfig& cfg, PyRng& rng) {
              return train_sensitivity(data, model, cfg, rng.rng);
          },
          py::arg("dataset"), py::arg("model"), py::arg("config"), py::arg("rng"));
    m.def("predict_constraint", &predict_constraint, py::arg("model"), py::arg("j"), py::arg("joint_state"),
          py::arg("joint_action"), py::arg("constraint_value"));
    m.def("save_sensitivity_model", &save_sensitivity_model, py::arg("model"), py::arg("n_agents"),
          py::arg("directory"));
    m.def("load_sensitivity_model", &load_sensitivity_model, py::arg("directory"));

    py::enum_<ProjectionKind>(m, "ProjectionKind")
        .value("off", ProjectionKind::Off)
        .value("hard", ProjectionKind::Hard)
        .value("soft", ProjectionKind::Soft);

    py::class_<ProjectionMode>(m, "ProjectionMode")
        .def(py::init<>())
        .def_readwrite("kind", &ProjectionMode::kind)
        .def_readwrite("rho", &ProjectionMode::rho)
        .def_readwrite("margin_tightening", &ProjectionMode::margin_tightening);

    py::class_<ProjectionResult>(m, "ProjectionResult")
        .def_readonly("applied_action", &ProjectionResult::applied_action)
        .def_readonly("slack", &ProjectionResult::slack)
        .def_readonly("feasible", &ProjectionResult::feasible);

    m.def("project", &project, py::arg("proposed_joint_action"), py::arg("joint_state"),
          py::arg("constraint_values"), py::arg("model"), py::arg("mode"), py::arg("action_bound") = 1.0);

    // ---- training
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("n_episodes", &TrainConfig::n_episodes)
        .def_readwrite("gamma", &TrainConfig::gamma)
        .def_readwrite("tau", &TrainConfig::tau)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("actor_lr", &TrainConfig::actor_lr)
        .def_readwrite("critic_lr", &TrainConfig::critic_lr)
        .def_readwrite("noise_sigma_initial", &TrainConfig::noise_sigma_initial)
        .def_readwrite("noise_sigma_final", &TrainConfig::noise_sigma_final)
        .def_readwrite("buffer_capacity", &TrainConfig::buffer_capacity)
        .def_readwrite("projection", &TrainConfig::projection)
        .def_readwrite("seed", &TrainConfig::seed);

    py::class_<EpisodeRow>(m, "EpisodeRow")
        .def_readonly("episode", &EpisodeRow::episode)
        .def_readonly("mean_reward", &EpisodeRow::mean_reward)
        .def_readonly("agent_rewards", &EpisodeRow::agent_rewards)
        .def_readonly("collisions", &EpisodeRow::collisions)
        .def_readonly("cumulative_collisions", &EpisodeRow::cumulative_collisions)
        .def_readonly("infeasible_steps", &EpisodeRow::infeasible_steps)
        .def_readonly("mean_slack", &EpisodeRow::mean_slack)
        .def_readonly("noise_sigma", &EpisodeRow::noise_sigma);

    py::class_<TrainingLog>(m, "TrainingLog")
        .def_readonly("rows", &TrainingLog::rows)
        .def("total_collisions", &TrainingLog::total_collisions)
        .def("total_infeasible_steps", &TrainingLog::total_infeasible_steps);

    py::class_<AgentNets>(m, "AgentNets")
        .def_readwrite("actor", &AgentNets::actor)
        .def_readwrite("critic", &AgentNets::critic)
        .def_readwrite("target_actor", &AgentNets::target_actor)
        .def_readwrite("target_critic", &AgentNets::target_critic);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("agents", &TrainResult::agents)
        .def_readonly("log", &TrainResult::log);

    m.def("train",
          [](const TrainConfig& tc, const EnvConfig& env, const SensitivityModel* model) {
              return train(tc, env, model);
          },
          py::arg("train_config"), py::arg("env_config"), py::arg("sensitivity_model") = nullptr,
          py::call_guard<py::gil_scoped_release>());
    m.def("evaluate",
          [](const std::vector<AgentNets>& agents, const EnvConfig& env, int episodes,
             const ProjectionMode& mode, const SensitivityModel* model, std::uint64_t seed) {
              Rng rng(seed);
              return evaluate(agents, env, episodes, mode, model, rng);
          },
          py::arg("agents"), py::arg("env_config"), py::arg("episodes"), py::arg("mode"),
          py::arg("sensitivity_model") = nullptr, py::arg("seed") = 1,
          py::call_guard<py::gil_scoped_release>());

    // ---- experiment harness
    py::enum_<Strategy>(m, "Strategy")
        .value("unconstrained", Strategy::Unconstrained)
        .value("hard", Strategy::Hard)
        .value("soft", Strategy::Soft);

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_readwrite("strategy", &ExperimentConfig::strategy)
        .def_readwrite("stress_case", &ExperimentConfig::stress_case)
        .def_readwrite("n_seeds", &ExperimentConfig::n_seeds)
        .def_readwrite("episodes", &ExperimentConfig::episodes)
        .def_readwrite("test_episodes", &ExperimentConfig::test_episodes)
        .def_readwrite("seed_base", &ExperimentConfig::seed_base)
        .def_readwrite("output_dir", &ExperimentConfig::output_dir)
        .def_readwrite("env", &ExperimentConfig::env)
        .def_readwrite("train", &ExperimentConfig::train)
        .def_readwrite("dataset_episodes", &ExperimentConfig::dataset_episodes)
        .def_readwrite("sensitivity", &ExperimentConfig::sensitivity);

    m.def("parse_config", &parse_config, py::arg("file"));
    m.def("parse_config_text", &parse_config_text, py::arg("text"), py::arg("source_name") = "<string>");
    m.def("run_experiment", &run_experiment, py::arg("config"), py::call_guard<py::gil_scoped_release>());
    m.def("summarize_runs", [](const std::vector<std::filesystem::path>& dirs) {
        const Summary s = summarize(dirs);
        std::ostringstream table;
        write_summary_table(s, table);
        return table.str();
    });
}
