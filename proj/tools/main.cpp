// Experiment runner: pretrain sensitivities, train strategy/stress
// cells, run the full grid, and aggregate metrics into Table-style
// summaries.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "safemaddpg/experiment.hpp"

namespace fs = std::filesystem;
using namespace safemaddpg;

namespace {

struct CommonFlags {
    std::string config_file;
    std::string strategy;
    std::string stress_case;
    int seeds = -1;
    int episodes = -1;
    int test_episodes = -1;
    long seed_base = -1;
    std::string out_dir;
    int workers = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_strategy = true) {
    cmd->add_option("--config", f.config_file, "configuration file (key = value lines)");
    if (with_strategy) cmd->add_option("--strategy", f.strategy, "unconstrained|hard|soft");
    cmd->add_option("--case", f.stress_case, "stress case: none|ed|ui");
    cmd->add_option("--seeds", f.seeds, "number of seeds");
    cmd->add_option("--episodes", f.episodes, "training episodes per run");
    cmd->add_option("--test-episodes", f.test_episodes, "greedy test episodes per run");
    cmd->add_option("--seed-base", f.seed_base, "base seed");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--workers", f.workers, "worker pool size for grid runs");
}

ExperimentConfig build_config(const CommonFlags& f) {
    ExperimentConfig config;
    if (!f.config_file.empty()) config = parse_config(f.config_file);
    const std::string where = "<command line>";
    if (!f.strategy.empty()) apply_config_entry(config, "strategy", f.strategy, where);
    if (!f.stress_case.empty()) apply_config_entry(config, "case", f.stress_case, where);
    if (f.seeds >= 0) apply_config_entry(config, "seeds", std::to_string(f.seeds), where);
    if (f.episodes >= 0) apply_config_entry(config, "episodes", std::to_string(f.episodes), where);
    if (f.test_episodes >= 0)
        apply_config_entry(config, "test_episodes", std::to_string(f.test_episodes), where);
    if (f.seed_base >= 0) apply_config_entry(config, "seed_base", std::to_string(f.seed_base), where);
    if (!f.out_dir.empty()) apply_config_entry(config, "out_dir", f.out_dir, where);
    if (f.workers >= 0) apply_config_entry(config, "workers", std::to_string(f.workers), where);
    config.validate();
    return config;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // training churns through large short-lived matrices; keep them on
    // the heap freelists instead of mmap/munmap round trips
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    CLI::App app{"safemaddpg: QP-filtered multi-agent deterministic policy gradients on a particle world"};
    app.require_subcommand(1);

    CommonFlags pretrain_flags, train_flags, grid_flags;
    std::vector<std::string> summarize_dirs, infeasible_dirs;

    auto* cmd_pretrain = app.add_subcommand(
        "pretrain", "collect a random-policy dataset and fit the constraint sensitivity networks");
    add_common(cmd_pretrain, pretrain_flags, false);

    auto* cmd_train = app.add_subcommand("train", "train one strategy/case cell over its seeds");
    add_common(cmd_train, train_flags);

    auto* cmd_grid =
        app.add_subcommand("grid", "run all strategies under both stress cases plus the summary");
    add_common(cmd_grid, grid_flags, false);

    auto* cmd_summarize = app.add_subcommand("summarize", "aggregate run metrics into a summary table");
    cmd_summarize->add_option("dirs", summarize_dirs, "metric directories or roots")->required();

    auto* cmd_infeasible =
        app.add_subcommand("report-infeasibility", "fraction of episodes hitting an infeasible QP, per cell");
    cmd_infeasible->add_option("dirs", infeasible_dirs, "metric directories or roots")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_pretrain->parsed()) {
            const ExperimentConfig config = build_config(pretrain_flags);
            const PretrainOutcome outcome = pretrain_sensitivity(config);
            std::cout << "sensitivity model written to " << outcome.dir.string() << '\n';
            for (std::size_t j = 0; j < outcome.report.per_constraint.size(); ++j) {
                const auto& s = outcome.report.per_constraint[j];
                std::cout << "constraint " << j << ": first loss " << s.epoch_losses.front()
                          << ", final loss " << s.final_train_loss << ", holdout mean |err| "
                          << s.holdout_mean_abs_error << '\n';
            }
        } else if (cmd_train->parsed()) {
            const ExperimentConfig config = build_config(train_flags);
            const auto dirs = run_experiment(config);
            for (const auto& d : dirs) std::cout << "run complete: " << d.string() << '\n';
        } else if (cmd_grid->parsed()) {
            const ExperimentConfig config = build_config(grid_flags);
            run_grid(config);
            const Summary summary = summarize({fs::path(config.output_dir)});
            write_summary_table(summary, std::cout);
            std::cout << "summary written to " << (fs::path(config.output_dir) / "summary.csv").string()
                      << '\n';
        } else if (cmd_summarize->parsed()) {
            std::vector<fs::path> roots(summarize_dirs.begin(), summarize_dirs.end());
            const Summary summary = summarize(roots);
            write_summary_table(summary, std::cout);
            std::ofstream csv("summary.csv");
            write_summary_csv(summary, csv);
            std::cout << "summary written to summary.csv\n";
        } else if (cmd_infeasible->parsed()) {
            std::vector<fs::path> roots(infeasible_dirs.begin(), infeasible_dirs.end());
            const auto report = infeasibility_report(roots);
            std::cout << "strategy        case   train-fraction  test-fraction\n";
            for (const auto& cell : report) {
                std::printf("%-15s %-6s %.4f          %.4f\n", strategy_name(cell.strategy).c_str(),
                            stress_mode_name(cell.stress_case).c_str(), cell.train_fraction,
                            cell.test_fraction);
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
