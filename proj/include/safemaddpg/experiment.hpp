#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "safemaddpg/maddpg.hpp"

namespace safemaddpg {

enum class Strategy { Unconstrained, Hard, Soft };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

/// One cell of the benchmark: a strategy under a stress case, repeated
/// over seeds. Defaults reproduce the reference setup (3 agents,
/// rho = 1000, tau = 0.01, batch 256) at desk scale.
struct ExperimentConfig {
    Strategy strategy = Strategy::Soft;
    StressMode stress_case = StressMode::None;
    int n_seeds = 3;
    int episodes = 1500;
    int test_episodes = 50;
    std::uint64_t seed_base = 1;
    std::string output_dir = "runs";
    int checkpoint_interval = 0;  // episodes between checkpoints; 0 = final only
    int workers = 0;              // grid worker pool size; 0 = hardware concurrency

    EnvConfig env;
    TrainConfig train;
    int dataset_episodes = 1000;
    SensitivityTrainConfig sensitivity;

    void validate() const;
};

/// key = value configuration text. Unknown keys and out-of-range values
/// are errors naming the key (and line). An empty file yields the full
/// default configuration.
ExperimentConfig parse_config(const std::filesystem::path& file);
ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name = "<string>");
void apply_config_entry(ExperimentConfig& config, const std::string& key, const std::string& value,
                        const std::string& where);
void write_config(const ExperimentConfig& config, std::ostream& out);

struct MetricsRow {
    std::string run_id;
    int episode = 0;
    std::string phase;  // train | test
    double mean_reward = 0.0;
    std::vector<double> agent_rewards;
    int collisions = 0;
    long cumulative_collisions = 0;
    int infeasible_steps = 0;
    double mean_slack = 0.0;
    double noise_sigma = 0.0;
};

std::string metrics_header(int n_agents);
std::string metrics_row_line(const MetricsRow& row);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& file);

/// Pre-trains the sensitivity model for a stress case: collects the
/// random-policy dataset (seeded from seed_base only, shared across
/// seeds) and fits one network per constraint. Checkpoints land in
/// <output_dir>/sensitivity_<case>/ together with training stats.
struct PretrainOutcome {
    SensitivityModel model;
    SensitivityTrainReport report;
    std::filesystem::path dir;
};
PretrainOutcome pretrain_sensitivity(const ExperimentConfig& config);

/// Runs every seed of the configured cell: train phase, then greedy
/// test episodes, writing train.csv / test.csv / config.txt and final
/// network checkpoints under <output_dir>/<strategy>_<case>/seed<k>/.
std::vector<std::filesystem::path> run_experiment(const ExperimentConfig& config);

/// Runs the full 3 x 2 strategy/stress grid with a worker pool (one run
/// per worker) and writes summary.csv at the output root.
void run_grid(const ExperimentConfig& base_config);

struct SummaryCell {
    Strategy strategy = Strategy::Unconstrained;
    StressMode stress_case = StressMode::None;
    int n_seeds = 0;
    double reward_mean = 0.0, reward_ci = 0.0;
    double train_collisions_mean = 0.0, train_collisions_ci = 0.0;
    double test_collisions_mean = 0.0, test_collisions_ci = 0.0;
    double test_collisions_total = 0.0;  // summed over seeds
    double infeasible_episode_fraction = 0.0;
    std::optional<double> train_pct_of_baseline;  // vs unconstrained, same case
    std::optional<double> test_pct_of_baseline;
};

struct Summary {
    std::vector<SummaryCell> cells;
    std::vector<std::string> missing;  // cells without any completed run
};

/// Aggregates per-cell means with normal-approximation 95% confidence
/// intervals (1.96 * s / sqrt(n); undefined for a single seed).
Summary summarize(const std::vector<std::filesystem::path>& metric_dirs);
void write_summary_csv(const Summary& summary, std::ostream& out);
void write_summary_table(const Summary& summary, std::ostream& out);

struct InfeasibilityCell {
    Strategy strategy;
    StressMode stress_case;
    double train_fraction = 0.0;  // episodes with >= 1 infeasible step
    double test_fraction = 0.0;
};
std::vector<InfeasibilityCell> infeasibility_report(const std::vector<std::filesystem::path>& metric_dirs);

/// Discovers run directories (those containing config.txt) under roots.
std::vector<std::filesystem::path> discover_runs(const std::vector<std::filesystem::path>& roots);

}  // namespace safemaddpg
