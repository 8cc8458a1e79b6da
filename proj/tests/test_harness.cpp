#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "safemaddpg/experiment.hpp"

using namespace safemaddpg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& file, const std::string& text) {
    fs::create_directories(file.parent_path());
    std::ofstream out(file);
    out << text;
}

// hand-written metrics for summarize-level tests
void fake_run(const fs::path& dir, Strategy strategy, StressMode stress, double final_train_cum,
              double final_test_cum, int infeasible_train_rows = 0) {
    ExperimentConfig config;
    config.strategy = strategy;
    config.stress_case = stress;
    std::ostringstream cfg;
    write_config(config, cfg);
    write_file(dir / "config.txt", cfg.str());

    std::ostringstream train;
    train << metrics_header(3) << '\n';
    const std::string id = strategy_name(strategy) + "_" + stress_mode_name(stress);
    for (int ep = 0; ep < 10; ++ep) {
        MetricsRow row;
        row.run_id = id;
        row.episode = ep;
        row.phase = "train";
        row.mean_reward = -50.0 - ep;
        row.agent_rewards = {-50.0, -50.0, -50.0};
        row.collisions = 0;
        row.cumulative_collisions = static_cast<long>(final_train_cum * (ep + 1) / 10);
        row.infeasible_steps = ep < infeasible_train_rows ? 1 : 0;
        row.mean_slack = 0.0;
        row.noise_sigma = 0.1;
        train << metrics_row_line(row) << '\n';
    }
    write_file(dir / "train.csv", train.str());

    std::ostringstream test;
    test << metrics_header(3) << '\n';
    for (int ep = 0; ep < 4; ++ep) {
        MetricsRow row;
        row.run_id = id;
        row.episode = ep;
        row.phase = "test";
        row.mean_reward = -40.0;
        row.agent_rewards = {-40.0, -40.0, -40.0};
        row.cumulative_collisions = static_cast<long>(final_test_cum * (ep + 1) / 4);
        test << metrics_row_line(row) << '\n';
    }
    write_file(dir / "test.csv", test.str());
}

}  // namespace

TEST_CASE("empty config text yields the reference defaults") {
    const ExperimentConfig config = parse_config_text("");
    CHECK(config.train.projection.rho == 1000.0);
    CHECK(config.train.tau == 0.01);
    CHECK(config.train.batch_size == 256);
    CHECK(config.sensitivity.batch_size == 256);
    CHECK(config.env.n_agents == 3);
    CHECK(config.episodes == 1500);
    CHECK(config.n_seeds == 3);
    CHECK(config.test_episodes == 50);
    CHECK(config.env.episode_length == 25);
}

TEST_CASE("config parser names the offending key and line") {
    CHECK_THROWS_WITH_AS(parse_config_text("rho = -5\n", "test.cfg"),
                         doctest::Contains("'rho'"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config_text("\n\nnope = 1\n", "test.cfg"),
                         doctest::Contains("test.cfg:3"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config_text("train.gamma = fast\n", "test.cfg"),
                         doctest::Contains("'train.gamma'"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_config_text("strategy hard\n", "test.cfg"),
                         doctest::Contains("key = value"), std::invalid_argument);
}

TEST_CASE("config accepts the hard/ed cell with comments and spacing") {
    const ExperimentConfig config = parse_config_text(
        "# table cell\n"
        "strategy = hard   # hard projection\n"
        "case = ed\n"
        "seeds = 2\n"
        "episodes = 10\n"
        "rho = 500\n");
    CHECK(config.strategy == Strategy::Hard);
    CHECK(config.stress_case == StressMode::Ed);
    CHECK(config.n_seeds == 2);
    CHECK(config.train.projection.rho == 500.0);
}

TEST_CASE("config snapshots parse back to the same configuration") {
    ExperimentConfig config = parse_config_text("strategy = soft\ncase = ui\nepisodes = 42\n");
    config.train.actor_lr = 3e-5;
    std::ostringstream out;
    write_config(config, out);
    const ExperimentConfig reread = parse_config_text(out.str());
    CHECK(reread.strategy == Strategy::Soft);
    CHECK(reread.stress_case == StressMode::Ui);
    CHECK(reread.episodes == 42);
    CHECK(reread.train.actor_lr == 3e-5);
}

TEST_CASE("metrics rows round-trip through the csv schema") {
    MetricsRow row;
    row.run_id = "soft_ui_seed0";
    row.episode = 12;
    row.phase = "train";
    row.mean_reward = -31.25;
    row.agent_rewards = {-30.0, -31.5, -32.25};
    row.collisions = 2;
    row.cumulative_collisions = 17;
    row.infeasible_steps = 1;
    row.mean_slack = 0.0125;
    row.noise_sigma = 0.3;

    TempDir tmp("safemaddpg_metrics_rt");
    std::ofstream out(tmp.path / "m.csv");
    out << metrics_header(3) << '\n' << metrics_row_line(row) << '\n';
    out.close();

    const auto rows = read_metrics_csv(tmp.path / "m.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].run_id == row.run_id);
    CHECK(rows[0].episode == row.episode);
    CHECK(rows[0].mean_reward == row.mean_reward);
    CHECK(rows[0].agent_rewards == row.agent_rewards);
    CHECK(rows[0].cumulative_collisions == row.cumulative_collisions);
    CHECK(rows[0].infeasible_steps == row.infeasible_steps);
    CHECK(rows[0].mean_slack == row.mean_slack);
}

TEST_CASE("summarize reproduces the reference percent-of-baseline arithmetic") {
    TempDir tmp("safemaddpg_summary");
    fake_run(tmp.path / "unconstrained_ui/seed0", Strategy::Unconstrained, StressMode::Ui, 174267.44, 1386.54);
    fake_run(tmp.path / "soft_ui/seed0", Strategy::Soft, StressMode::Ui, 3977.0, 52.77);
    fake_run(tmp.path / "unconstrained_ed/seed0", Strategy::Unconstrained, StressMode::Ed, 194844.0, 1499.77);
    fake_run(tmp.path / "soft_ed/seed0", Strategy::Soft, StressMode::Ed, 3899.11, 40.77);

    const Summary summary = summarize({tmp.path});
    REQUIRE(summary.cells.size() == 4);
    for (const auto& cell : summary.cells) {
        if (cell.strategy == Strategy::Soft && cell.stress_case == StressMode::Ui) {
            REQUIRE(cell.train_pct_of_baseline.has_value());
            CHECK(*cell.train_pct_of_baseline == doctest::Approx(2.28).epsilon(0.01));
        }
        if (cell.strategy == Strategy::Soft && cell.stress_case == StressMode::Ed) {
            REQUIRE(cell.train_pct_of_baseline.has_value());
            // 98.0% reduction
            CHECK(100.0 - *cell.train_pct_of_baseline == doctest::Approx(98.0).epsilon(0.001));
        }
        // single seed: confidence interval undefined
        CHECK(std::isnan(cell.reward_ci));
    }
    // missing hard cells are reported, table still emitted
    CHECK(summary.missing.size() == 2);
    std::ostringstream table;
    write_summary_table(summary, table);
    CHECK(table.str().find("soft") != std::string::npos);
    CHECK(table.str().find("missing cell: hard/ui") != std::string::npos);
}

TEST_CASE("summary confidence intervals use the normal approximation") {
    TempDir tmp("safemaddpg_summary_ci");
    fake_run(tmp.path / "soft_ui/seed0", Strategy::Soft, StressMode::Ui, 100.0, 1.0);
    fake_run(tmp.path / "soft_ui/seed1", Strategy::Soft, StressMode::Ui, 200.0, 3.0);
    fake_run(tmp.path / "soft_ui/seed2", Strategy::Soft, StressMode::Ui, 300.0, 5.0);

    const Summary summary = summarize({tmp.path});
    REQUIRE(summary.cells.size() == 1);
    const auto& cell = summary.cells[0];
    CHECK(cell.n_seeds == 3);
    CHECK(cell.train_collisions_mean == doctest::Approx(200.0));
    // s = 100, ci = 1.96 * 100 / sqrt(3)
    CHECK(cell.train_collisions_ci == doctest::Approx(1.96 * 100.0 / std::sqrt(3.0)).epsilon(1e-10));
    CHECK(cell.test_collisions_total == doctest::Approx(9.0));
}

TEST_CASE("infeasibility report: zero for soft and unconstrained, positive for flagged runs") {
    TempDir tmp("safemaddpg_infeasible");
    fake_run(tmp.path / "soft_ui/seed0", Strategy::Soft, StressMode::Ui, 10.0, 1.0, 0);
    fake_run(tmp.path / "unconstrained_ui/seed0", Strategy::Unconstrained, StressMode::Ui, 500.0, 9.0, 0);
    fake_run(tmp.path / "hard_ui/seed0", Strategy::Hard, StressMode::Ui, 50.0, 2.0, 3);

    const auto report = infeasibility_report({tmp.path});
    REQUIRE(report.size() == 3);
    for (const auto& cell : report) {
        if (cell.strategy == Strategy::Soft) CHECK(cell.train_fraction == 0.0);
        if (cell.strategy == Strategy::Unconstrained) CHECK(cell.train_fraction == 0.0);
        if (cell.strategy == Strategy::Hard) CHECK(cell.train_fraction == doctest::Approx(0.3));
    }
}

TEST_CASE("run_experiment writes schema-valid deterministic csv") {
    TempDir tmp("safemaddpg_run_smoke");
    ExperimentConfig config = parse_config_text(
        "strategy = unconstrained\n"
        "case = none\n"
        "seeds = 1\n"
        "episodes = 10\n"
        "test_episodes = 3\n"
        "train.batch_size = 32\n"  // engage a few updates cheaply
        "sensitivity.dataset_episodes = 2\n");
    config.output_dir = (tmp.path / "a").string();

    const auto dirs = run_experiment(config);
    REQUIRE(dirs.size() == 1);
    const auto rows = read_metrics_csv(dirs[0] / "train.csv");
    CHECK(rows.size() == 10);
    long cumulative = 0;
    for (const auto& r : rows) {
        CHECK(r.phase == "train");
        CHECK(r.agent_rewards.size() == 3);
        CHECK(r.cumulative_collisions >= cumulative);
        cumulative = r.cumulative_collisions;
        CHECK(r.infeasible_steps == 0);
    }
    const auto test_rows = read_metrics_csv(dirs[0] / "test.csv");
    CHECK(test_rows.size() == 3);
    CHECK(fs::exists(dirs[0] / "actor_agent0.mlp"));
    CHECK(fs::exists(dirs[0] / "config.txt"));

    // byte-identical rerun
    config.output_dir = (tmp.path / "b").string();
    const auto dirs2 = run_experiment(config);
    CHECK(slurp(dirs[0] / "train.csv") == slurp(dirs2[0] / "train.csv"));
    CHECK(slurp(dirs[0] / "test.csv") == slurp(dirs2[0] / "test.csv"));
}

TEST_CASE("run_experiment trains and reuses the per-case sensitivity model") {
    TempDir tmp("safemaddpg_run_soft");
    ExperimentConfig config = parse_config_text(
        "strategy = soft\n"
        "case = ui\n"
        "seeds = 1\n"
        "episodes = 3\n"
        "test_episodes = 1\n"
        "sensitivity.dataset_episodes = 20\n"
        "sensitivity.epochs = 2\n");
    config.output_dir = (tmp.path / "out").string();

    const auto dirs = run_experiment(config);
    CHECK(fs::exists(fs::path(config.output_dir) / "sensitivity_ui" / "manifest.txt"));
    const auto rows = read_metrics_csv(dirs[0] / "train.csv");
    CHECK(rows.size() == 3);

    // second strategy under the same case reuses the checkpoint silently
    config.strategy = Strategy::Hard;
    const auto dirs_hard = run_experiment(config);
    CHECK(read_metrics_csv(dirs_hard[0] / "train.csv").size() == 3);
}

TEST_CASE("discover_runs finds nested run directories once") {
    TempDir tmp("safemaddpg_discover");
    fake_run(tmp.path / "soft_ui/seed0", Strategy::Soft, StressMode::Ui, 10.0, 1.0);
    fake_run(tmp.path / "soft_ui/seed1", Strategy::Soft, StressMode::Ui, 12.0, 1.0);
    const auto found = discover_runs({tmp.path, tmp.path / "soft_ui"});
    CHECK(found.size() == 2);
}
