#include "safemaddpg/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "safemaddpg/checkpoint.hpp"

namespace safemaddpg {

namespace fs = std::filesystem;

namespace {

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

ProjectionMode mode_for(const ExperimentConfig& config) {
    ProjectionMode mode = config.train.projection;
    switch (config.strategy) {
        case Strategy::Unconstrained: mode.kind = ProjectionKind::Off; break;
        case Strategy::Hard: mode.kind = ProjectionKind::Hard; break;
        case Strategy::Soft: mode.kind = ProjectionKind::Soft; break;
    }
    return mode;
}

EnvConfig env_for(const ExperimentConfig& config) {
    EnvConfig env = config.env;
    env.stress_mode = config.stress_case;
    return env;
}

std::string run_id_for(const ExperimentConfig& config, int seed_index) {
    return strategy_name(config.strategy) + "_" + stress_mode_name(config.stress_case) + "_seed" +
           std::to_string(seed_index);
}

MetricsRow to_metrics_row(const EpisodeRow& row, const std::string& run_id, const std::string& phase) {
    MetricsRow m;
    m.run_id = run_id;
    m.episode = row.episode;
    m.phase = phase;
    m.mean_reward = row.mean_reward;
    m.agent_rewards.assign(row.agent_rewards.data(), row.agent_rewards.data() + row.agent_rewards.size());
    m.collisions = row.collisions;
    m.cumulative_collisions = row.cumulative_collisions;
    m.infeasible_steps = row.infeasible_steps;
    m.mean_slack = row.mean_slack;
    m.noise_sigma = row.noise_sigma;
    return m;
}

void write_metrics_csv(const fs::path& file, const std::vector<MetricsRow>& rows, int n_agents) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    out << metrics_header(n_agents) << '\n';
    for (const auto& r : rows) out << metrics_row_line(r) << '\n';
    if (!out) throw std::runtime_error("write failed: " + file.string());
}

}  // namespace

std::string metrics_header(int n_agents) {
    std::ostringstream out;
    out << "run_id,episode,phase,mean_reward";
    for (int i = 0; i < n_agents; ++i) out << ",reward_a" << i;
    out << ",collisions,cumulative_collisions,infeasible_steps,mean_slack,noise_sigma";
    return out.str();
}

std::string metrics_row_line(const MetricsRow& row) {
    std::ostringstream out;
    out << row.run_id << ',' << row.episode << ',' << row.phase << ',' << fmt_real(row.mean_reward);
    for (double r : row.agent_rewards) out << ',' << fmt_real(r);
    out << ',' << row.collisions << ',' << row.cumulative_collisions << ',' << row.infeasible_steps << ','
        << fmt_real(row.mean_slack) << ',' << fmt_real(row.noise_sigma);
    return out.str();
}

std::vector<MetricsRow> read_metrics_csv(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read " + file.string());
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("empty metrics file: " + file.string());
    std::vector<std::string> columns;
    {
        std::istringstream hs(header);
        std::string col;
        while (std::getline(hs, col, ',')) columns.push_back(col);
    }
    const auto expect_prefix = std::string("run_id,episode,phase,mean_reward");
    if (header.rfind(expect_prefix, 0) != 0)
        throw std::runtime_error("unexpected metrics schema in " + file.string());
    const int n_agents = static_cast<int>(std::count_if(
        columns.begin(), columns.end(), [](const std::string& c) { return c.rfind("reward_a", 0) == 0; }));

    std::vector<MetricsRow> rows;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        MetricsRow r;
        auto next = [&](const char* what) {
            if (!std::getline(ls, tok, ','))
                throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": missing " + what);
            return tok;
        };
        r.run_id = next("run_id");
        r.episode = std::stoi(next("episode"));
        r.phase = next("phase");
        r.mean_reward = std::stod(next("mean_reward"));
        for (int i = 0; i < n_agents; ++i) r.agent_rewards.push_back(std::stod(next("agent reward")));
        r.collisions = std::stoi(next("collisions"));
        r.cumulative_collisions = std::stol(next("cumulative_collisions"));
        r.infeasible_steps = std::stoi(next("infeasible_steps"));
        r.mean_slack = std::stod(next("mean_slack"));
        r.noise_sigma = std::stod(next("noise_sigma"));
        rows.push_back(std::move(r));
    }
    return rows;
}

PretrainOutcome pretrain_sensitivity(const ExperimentConfig& config) {
    config.validate();
    const EnvConfig env = env_for(config);
    PretrainOutcome outcome;
    outcome.dir = fs::path(config.output_dir) / ("sensitivity_" + stress_mode_name(config.stress_case));

    // the dataset and model are shared by every seed of the stress case
    Rng data_rng(Rng::mix(config.seed_base ^ 0x5af3ULL));
    const DatasetD dataset = collect_dataset(env, config.dataset_episodes, data_rng);

    Rng train_rng(Rng::mix(config.seed_base ^ 0x7e11ULL));
    outcome.model = init_sensitivity_model(env.n_constraints(), env.n_agents * env.obs_dim(),
                                           env.action_dim(), config.sensitivity.hidden_units, train_rng);
    outcome.report = train_sensitivity(dataset, outcome.model, config.sensitivity, train_rng);

    save_sensitivity_model(outcome.model, env.n_agents, outcome.dir);
    std::ofstream stats(outcome.dir / "training_stats.txt");
    stats << "records " << dataset.records.size() << '\n';
    for (std::size_t j = 0; j < outcome.report.per_constraint.size(); ++j) {
        const auto& s = outcome.report.per_constraint[j];
        stats << "constraint " << j << " first_loss " << fmt_real(s.epoch_losses.front()) << " final_loss "
              << fmt_real(s.final_train_loss) << " holdout_mse " << fmt_real(s.holdout_mse)
              << " holdout_mean_abs " << fmt_real(s.holdout_mean_abs_error) << '\n';
    }
    return outcome;
}

std::vector<fs::path> run_experiment(const ExperimentConfig& config) {
    config.validate();
    const EnvConfig env = env_for(config);
    const ProjectionMode mode = mode_for(config);

    SensitivityModel model;
    const bool needs_model = mode.kind != ProjectionKind::Off;
    if (needs_model) {
        const fs::path dir = fs::path(config.output_dir) / ("sensitivity_" + stress_mode_name(config.stress_case));
        if (fs::exists(dir / "manifest.txt")) {
            model = load_sensitivity_model(dir);
        } else {
            model = pretrain_sensitivity(config).model;
        }
    }

    std::vector<fs::path> run_dirs;
    for (int k = 0; k < config.n_seeds; ++k) {
        const std::string run_id = run_id_for(config, k);
        const fs::path dir = fs::path(config.output_dir) /
                             (strategy_name(config.strategy) + "_" + stress_mode_name(config.stress_case)) /
                             ("seed" + std::to_string(k));
        fs::create_directories(dir);

        TrainConfig tc = config.train;
        tc.n_episodes = config.episodes;
        tc.projection = mode;
        tc.seed = Rng::mix(config.seed_base + 0x1000003ULL * static_cast<std::uint64_t>(k));

        {
            std::ofstream snapshot(dir / "config.txt");
            ExperimentConfig effective = config;
            effective.train = tc;
            write_config(effective, snapshot);
        }

        EpisodeCallback checkpoint_cb = nullptr;
        if (config.checkpoint_interval > 0) {
            const fs::path ckdir = dir / "checkpoints";
            fs::create_directories(ckdir);
            const int interval = config.checkpoint_interval;
            checkpoint_cb = [ckdir, interval](int episode, const std::vector<AgentNets>& agents) {
                if ((episode + 1) % interval != 0) return;
                for (std::size_t i = 0; i < agents.size(); ++i) {
                    const std::string tag = "ep" + std::to_string(episode + 1) + "_agent" + std::to_string(i);
                    save_mlp(agents[i].actor, ckdir / ("actor_" + tag + ".mlp"));
                    save_mlp(agents[i].critic, ckdir / ("critic_" + tag + ".mlp"));
                }
            };
        }

        TrainResult result = train(tc, env, needs_model ? &model : nullptr, checkpoint_cb);

        std::vector<MetricsRow> train_rows;
        train_rows.reserve(result.log.rows.size());
        for (const auto& row : result.log.rows) train_rows.push_back(to_metrics_row(row, run_id, "train"));
        write_metrics_csv(dir / "train.csv", train_rows, env.n_agents);

        Rng eval_rng(Rng::mix(tc.seed ^ 0x7357ULL));
        const TrainingLog test_log =
            evaluate(result.agents, env, config.test_episodes, mode, needs_model ? &model : nullptr, eval_rng);
        std::vector<MetricsRow> test_rows;
        for (const auto& row : test_log.rows) test_rows.push_back(to_metrics_row(row, run_id, "test"));
        write_metrics_csv(dir / "test.csv", test_rows, env.n_agents);

        for (std::size_t i = 0; i < result.agents.size(); ++i) {
            save_mlp(result.agents[i].actor, dir / ("actor_agent" + std::to_string(i) + ".mlp"));
            save_mlp(result.agents[i].critic, dir / ("critic_agent" + std::to_string(i) + ".mlp"));
        }
        run_dirs.push_back(dir);
    }
    return run_dirs;
}

void run_grid(const ExperimentConfig& base) {
    base.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<StressMode> cases = {StressMode::Ed, StressMode::Ui};
    const std::vector<Strategy> strategies = {Strategy::Unconstrained, Strategy::Hard, Strategy::Soft};

    // sensitivity models are shared per stress case; build them up front
    for (StressMode sc : cases) {
        ExperimentConfig c = base;
        c.stress_case = sc;
        const fs::path dir = fs::path(c.output_dir) / ("sensitivity_" + stress_mode_name(sc));
        if (!fs::exists(dir / "manifest.txt")) pretrain_sensitivity(c);
    }

    struct Job {
        ExperimentConfig config;
    };
    std::vector<Job> jobs;
    for (StressMode sc : cases) {
        for (Strategy st : strategies) {
            ExperimentConfig c = base;
            c.stress_case = sc;
            c.strategy = st;
            jobs.push_back({std::move(c)});
        }
    }

    unsigned n_workers = base.workers > 0 ? static_cast<unsigned>(base.workers)
                                          : std::max(1u, std::thread::hardware_concurrency());
    n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(jobs.size()));

    std::mutex take_mutex;
    std::size_t next_job = 0;
    std::vector<std::string> errors;
    auto worker = [&] {
        while (true) {
            std::size_t mine;
            {
                std::lock_guard<std::mutex> lock(take_mutex);
                if (next_job >= jobs.size()) return;
                mine = next_job++;
            }
            try {
                run_experiment(jobs[mine].config);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(take_mutex);
                errors.push_back(run_id_for(jobs[mine].config, 0) + ": " + e.what());
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (!errors.empty()) {
        std::string all;
        for (const auto& e : errors) all += e + "; ";
        throw std::runtime_error("grid: " + all);
    }

    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    {
        std::ofstream manifest(fs::path(base.output_dir) / "grid_manifest.txt");
        manifest << "cells " << jobs.size() << '\n';
        manifest << "seeds " << base.n_seeds << '\n';
        manifest << "episodes " << base.episodes << '\n';
        manifest << "workers " << n_workers << '\n';
        manifest << "wall_time_seconds " << fmt_real(elapsed) << '\n';
    }

    const Summary summary = summarize({fs::path(base.output_dir)});
    std::ofstream csv(fs::path(base.output_dir) / "summary.csv");
    write_summary_csv(summary, csv);
}

std::vector<fs::path> discover_runs(const std::vector<fs::path>& roots) {
    std::vector<fs::path> dirs;
    for (const auto& root : roots) {
        if (!fs::exists(root)) continue;
        if (fs::exists(root / "config.txt") && fs::exists(root / "train.csv")) {
            dirs.push_back(root);
            continue;
        }
        for (const auto& entry : fs::recursive_directory_iterator(root)) {
            if (!entry.is_directory()) continue;
            if (fs::exists(entry.path() / "config.txt") && fs::exists(entry.path() / "train.csv"))
                dirs.push_back(entry.path());
        }
    }
    std::sort(dirs.begin(), dirs.end());
    dirs.erase(std::unique(dirs.begin(), dirs.end()), dirs.end());
    return dirs;
}

namespace {

struct RunData {
    Strategy strategy;
    StressMode stress_case;
    double total_reward = 0.0;         // mean reward over the trailing window
    double train_collisions = 0.0;     // final cumulative, train phase
    double test_collisions = 0.0;      // final cumulative, test phase
    double train_infeasible_fraction = 0.0;
    double test_infeasible_fraction = 0.0;
};

RunData load_run(const fs::path& dir) {
    const ExperimentConfig config = parse_config(dir / "config.txt");
    RunData run;
    run.strategy = config.strategy;
    run.stress_case = config.stress_case;

    const auto train_rows = read_metrics_csv(dir / "train.csv");
    if (train_rows.empty()) throw std::runtime_error("no training rows in " + dir.string());
    // reported training reward: mean over the last min(100, n) episodes
    const std::size_t window = std::min<std::size_t>(100, train_rows.size());
    double sum = 0.0;
    for (std::size_t i = train_rows.size() - window; i < train_rows.size(); ++i)
        sum += train_rows[i].mean_reward;
    run.total_reward = sum / static_cast<double>(window);
    run.train_collisions = static_cast<double>(train_rows.back().cumulative_collisions);
    long infeasible_eps = 0;
    for (const auto& r : train_rows) infeasible_eps += r.infeasible_steps > 0 ? 1 : 0;
    run.train_infeasible_fraction = static_cast<double>(infeasible_eps) / static_cast<double>(train_rows.size());

    const fs::path test_file = dir / "test.csv";
    if (fs::exists(test_file)) {
        const auto test_rows = read_metrics_csv(test_file);
        if (!test_rows.empty()) {
            run.test_collisions = static_cast<double>(test_rows.back().cumulative_collisions);
            long test_infeasible = 0;
            for (const auto& r : test_rows) test_infeasible += r.infeasible_steps > 0 ? 1 : 0;
            run.test_infeasible_fraction =
                static_cast<double>(test_infeasible) / static_cast<double>(test_rows.size());
        }
    }
    return run;
}

struct MeanCi {
    double mean = 0.0;
    double ci = 0.0;  // 1.96 * s / sqrt(n); NaN for n == 1
};

MeanCi mean_ci(const std::vector<double>& xs) {
    MeanCi r;
    const double n = static_cast<double>(xs.size());
    for (double x : xs) r.mean += x;
    r.mean /= n;
    if (xs.size() < 2) {
        r.ci = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    r.ci = 1.96 * sd / std::sqrt(n);
    return r;
}

}  // namespace

Summary summarize(const std::vector<fs::path>& metric_dirs) {
    const auto dirs = discover_runs(metric_dirs);
    struct Key {
        Strategy s;
        StressMode c;
        bool operator<(const Key& o) const { return std::tie(s, c) < std::tie(o.s, o.c); }
    };
    std::map<Key, std::vector<RunData>> cells;
    for (const auto& dir : dirs) {
        RunData run = load_run(dir);
        cells[{run.strategy, run.stress_case}].push_back(std::move(run));
    }

    Summary summary;
    for (const auto& [key, runs] : cells) {
        SummaryCell cell;
        cell.strategy = key.s;
        cell.stress_case = key.c;
        cell.n_seeds = static_cast<int>(runs.size());
        std::vector<double> rewards, train_c, test_c, infeasible;
        for (const auto& r : runs) {
            rewards.push_back(r.total_reward);
            train_c.push_back(r.train_collisions);
            test_c.push_back(r.test_collisions);
            infeasible.push_back(r.train_infeasible_fraction);
        }
        const MeanCi rw = mean_ci(rewards), tc = mean_ci(train_c), xc = mean_ci(test_c);
        cell.reward_mean = rw.mean;
        cell.reward_ci = rw.ci;
        cell.train_collisions_mean = tc.mean;
        cell.train_collisions_ci = tc.ci;
        cell.test_collisions_mean = xc.mean;
        cell.test_collisions_ci = xc.ci;
        cell.test_collisions_total = 0.0;
        for (double v : test_c) cell.test_collisions_total += v;
        cell.infeasible_episode_fraction = mean_ci(infeasible).mean;
        summary.cells.push_back(cell);
    }

    // percent-of-baseline against the unconstrained cell of the same case
    for (auto& cell : summary.cells) {
        if (cell.strategy == Strategy::Unconstrained) continue;
        for (const auto& base : summary.cells) {
            if (base.strategy == Strategy::Unconstrained && base.stress_case == cell.stress_case) {
                if (base.train_collisions_mean > 0.0)
                    cell.train_pct_of_baseline = 100.0 * cell.train_collisions_mean / base.train_collisions_mean;
                if (base.test_collisions_mean > 0.0)
                    cell.test_pct_of_baseline = 100.0 * cell.test_collisions_mean / base.test_collisions_mean;
            }
        }
    }

    // report cells of the full grid that have no runs yet
    for (StressMode sc : {StressMode::None, StressMode::Ed, StressMode::Ui}) {
        for (Strategy st : {Strategy::Unconstrained, Strategy::Hard, Strategy::Soft}) {
            const bool present = std::any_of(summary.cells.begin(), summary.cells.end(), [&](const auto& c) {
                return c.strategy == st && c.stress_case == sc;
            });
            if (!present && sc != StressMode::None)
                summary.missing.push_back(strategy_name(st) + "/" + stress_mode_name(sc));
        }
    }
    return summary;
}

void write_summary_csv(const Summary& summary, std::ostream& out) {
    out << "strategy,case,n_seeds,reward_mean,reward_ci95,train_collisions_mean,train_collisions_ci95,"
           "train_pct_of_baseline,test_collisions_mean,test_collisions_ci95,test_collisions_total,"
           "test_pct_of_baseline,infeasible_episode_fraction\n";
    auto opt = [&](const std::optional<double>& v) { return v ? fmt_real(*v) : std::string("na"); };
    auto ci = [&](double v) { return std::isnan(v) ? std::string("na") : fmt_real(v); };
    for (const auto& c : summary.cells) {
        out << strategy_name(c.strategy) << ',' << stress_mode_name(c.stress_case) << ',' << c.n_seeds << ','
            << fmt_real(c.reward_mean) << ',' << ci(c.reward_ci) << ',' << fmt_real(c.train_collisions_mean)
            << ',' << ci(c.train_collisions_ci) << ',' << opt(c.train_pct_of_baseline) << ','
            << fmt_real(c.test_collisions_mean) << ',' << ci(c.test_collisions_ci) << ','
            << fmt_real(c.test_collisions_total) << ',' << opt(c.test_pct_of_baseline) << ','
            << fmt_real(c.infeasible_episode_fraction) << '\n';
    }
}

void write_summary_table(const Summary& summary, std::ostream& out) {
    out << "strategy        case  seeds  reward(mean+-ci)        train collisions        "
           "test collisions        infeasible-ep\n";
    char line[256];
    for (const auto& c : summary.cells) {
        auto ci_str = [](double v) {
            if (std::isnan(v)) return std::string("n/a");
            char b[32];
            std::snprintf(b, sizeof(b), "%.2f", v);
            return std::string(b);
        };
        std::string train = fmt_real(c.train_collisions_mean);
        if (c.train_pct_of_baseline) {
            char b[64];
            std::snprintf(b, sizeof(b), " (%.2f%% of baseline)", *c.train_pct_of_baseline);
            train += b;
        }
        std::snprintf(line, sizeof(line), "%-15s %-5s %-6d %.2f +- %-14s %-23s %.2f +- %-8s %.3f\n",
                      strategy_name(c.strategy).c_str(), stress_mode_name(c.stress_case).c_str(), c.n_seeds,
                      c.reward_mean, ci_str(c.reward_ci).c_str(), train.c_str(), c.test_collisions_mean,
                      ci_str(c.test_collisions_ci).c_str(), c.infeasible_episode_fraction);
        out << line;
    }
    for (const auto& m : summary.missing) out << "missing cell: " << m << '\n';
}

std::vector<InfeasibilityCell> infeasibility_report(const std::vector<fs::path>& metric_dirs) {
    const auto dirs = discover_runs(metric_dirs);
    struct Key {
        Strategy s;
        StressMode c;
        bool operator<(const Key& o) const { return std::tie(s, c) < std::tie(o.s, o.c); }
    };
    std::map<Key, std::pair<std::vector<double>, std::vector<double>>> cells;
    for (const auto& dir : dirs) {
        const RunData run = load_run(dir);
        auto& [train_fracs, test_fracs] = cells[{run.strategy, run.stress_case}];
        train_fracs.push_back(run.train_infeasible_fraction);
        test_fracs.push_back(run.test_infeasible_fraction);
    }
    std::vector<InfeasibilityCell> report;
    for (const auto& [key, fracs] : cells) {
        InfeasibilityCell cell;
        cell.strategy = key.s;
        cell.stress_case = key.c;
        cell.train_fraction = mean_ci(fracs.first).mean;
        cell.test_fraction = mean_ci(fracs.second).mean;
        report.push_back(cell);
    }
    return report;
}

}  // namespace safemaddpg
