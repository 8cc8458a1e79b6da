#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "safemaddpg/experiment.hpp"

namespace safemaddpg {

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Unconstrained: return "unconstrained";
        case Strategy::Hard: return "hard";
        case Strategy::Soft: return "soft";
    }
    return "unconstrained";
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "unconstrained") return Strategy::Unconstrained;
    if (name == "hard") return Strategy::Hard;
    if (name == "soft") return Strategy::Soft;
    throw std::invalid_argument("unknown strategy: " + name + " (expected unconstrained|hard|soft)");
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& where, const std::string& why) {
    throw std::invalid_argument(where + ": invalid value for '" + key + "': " + why);
}

double parse_real(const std::string& key, const std::string& value, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) bad_value(key, where, "trailing characters in '" + value + "'");
        return v;
    } catch (const std::invalid_argument&) {
        bad_value(key, where, "not a number: '" + value + "'");
    } catch (const std::out_of_range&) {
        bad_value(key, where, "out of range: '" + value + "'");
    }
}

long parse_int(const std::string& key, const std::string& value, const std::string& where) {
    long v = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        bad_value(key, where, "not an integer: '" + value + "'");
    return v;
}

void require(bool ok, const std::string& key, const std::string& where, const std::string& why) {
    if (!ok) bad_value(key, where, why);
}

}  // namespace

void apply_config_entry(ExperimentConfig& c, const std::string& key, const std::string& value,
                        const std::string& where) {
    auto real = [&] { return parse_real(key, value, where); };
    auto integer = [&] { return parse_int(key, value, where); };

    if (key == "strategy") {
        c.strategy = strategy_from_name(value);
    } else if (key == "case") {
        c.stress_case = stress_mode_from_name(value);
    } else if (key == "seeds") {
        const long v = integer();
        require(v >= 1, key, where, "must be at least 1");
        c.n_seeds = static_cast<int>(v);
    } else if (key == "episodes") {
        const long v = integer();
        require(v >= 1, key, where, "must be at least 1");
        c.episodes = static_cast<int>(v);
    } else if (key == "test_episodes") {
        const long v = integer();
        require(v >= 0, key, where, "must be non-negative");
        c.test_episodes = static_cast<int>(v);
    } else if (key == "seed_base") {
        c.seed_base = static_cast<std::uint64_t>(integer());
    } else if (key == "out_dir") {
        c.output_dir = value;
    } else if (key == "checkpoint_interval") {
        const long v = integer();
        require(v >= 0, key, where, "must be non-negative");
        c.checkpoint_interval = static_cast<int>(v);
    } else if (key == "workers") {
        const long v = integer();
        require(v >= 0, key, where, "must be non-negative");
        c.workers = static_cast<int>(v);
    } else if (key == "rho") {
        const double v = real();
        require(v > 0.0, key, where, "must be positive");
        c.train.projection.rho = v;
    } else if (key == "margin_tightening") {
        const double v = real();
        require(v >= 0.0, key, where, "must be non-negative");
        c.train.projection.margin_tightening = v;
    } else if (key == "env.n_agents") {
        const long v = integer();
        require(v >= 2, key, where, "must be at least 2");
        c.env.n_agents = static_cast<int>(v);
    } else if (key == "env.dt") {
        const double v = real();
        require(v > 0.0, key, where, "must be positive");
        c.env.dt = v;
    } else if (key == "env.damping") {
        const double v = real();
        require(v >= 0.0 && v < 1.0, key, where, "must lie in [0,1)");
        c.env.damping = v;
    } else if (key == "env.mass") {
        const double v = real();
        require(v > 0.0, key, where, "must be positive");
        c.env.mass = v;
    } else if (key == "env.arena_half_width") {
        const double v = real();
        require(v > 0.0, key, where, "must be positive");
        c.env.arena_half_width = v;
    } else if (key == "env.collision_distance") {
        const double v = real();
        require(v > 0.0, key, where, "must be positive");
        c.env.collision_distance = v;
    } else if (key == "env.collision_penalty") {
        const double v = real();
        require(v >= 0.0, key, where, "must be non-negative");
        c.env.collision_penalty = v;
    } else if (key == "env.episode_length") {
        const long v = integer();
        require(v >= 1, key, where, "must be at least 1");
        c.env.episode_length = static_cast<int>(v);
    } else if (key == "env.disturbance_half_width") {
        const double v = real();
        require(v >= 0.0, key, where, "must be non-negative");
        c.env.disturbance_half_width = v;
    } else if (key == "train.gamma") {
        const double v = real();
        require(v > 0.0 && v < 1.0, key, where, "must lie in (0,1)");
        c.train.gamma = v;
    } else if (key == "train.tau") {
        const double v = real();
        require(v > 0.0 && v < 1.0, key, where, "must lie in (0,1)");
        c.train.tau = v;
    } else if (key == "train.batch_size") {
        const long v = integer();
        require(v >= 1, key, where, "must be at least 1");
        c.train.batch_size = static_cast<int>(v);
    } else if (key == "train.actor_lr") {
        const double v = real();
        require(v > 0.0, key, where, "must be positive");
        c.train.actor_lr = v;
    } else if (key == "train.critic_lr") {
        const double v = real();
        require(v > 0.0, key, where, "must be positive");
        c.train.critic_lr = v;
    } else if (key == "train.noise_sigma_initial") {
        const double v = real();
        require(v >= 0.0, key, where, "must be non-negative");
        c.train.noise_sigma_initial = v;
    } else if (key == "train.noise_sigma_final") {
        const double v = real();
        require(v >= 0.0, key, where, "must be non-negative");
        c.train.noise_sigma_final = v;
    } else if (key == "train.buffer_capacity") {
        const long v = integer();
        require(v >= 1, key, where, "must be at least 1");
        c.train.buffer_capacity = static_cast<std::size_t>(v);
    } else if (key == "sensitivity.dataset_episodes") {
        const long v = integer();
        require(v >= 1, key, where, "must be at least 1");
        c.dataset_episodes = static_cast<int>(v);
    } else if (key == "sensitivity.epochs") {
        const long v = integer();
        require(v >= 1, key, where, "must be at least 1");
        c.sensitivity.epochs = static_cast<int>(v);
    } else if (key == "sensitivity.batch_size") {
        const long v = integer();
        require(v >= 1, key, where, "must be at least 1");
        c.sensitivity.batch_size = static_cast<int>(v);
    } else if (key == "sensitivity.learning_rate") {
        const double v = real();
        require(v > 0.0, key, where, "must be positive");
        c.sensitivity.learning_rate = v;
    } else if (key == "sensitivity.holdout_fraction") {
        const double v = real();
        require(v >= 0.0 && v < 1.0, key, where, "must lie in [0,1)");
        c.sensitivity.holdout_fraction = v;
    } else if (key == "sensitivity.hidden_units") {
        const long v = integer();
        require(v >= 1, key, where, "must be at least 1");
        c.sensitivity.hidden_units = static_cast<int>(v);
    } else {
        throw std::invalid_argument(where + ": unknown configuration key '" + key + "'");
    }
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& source_name) {
    ExperimentConfig config;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        const std::string where = source_name + ":" + std::to_string(line_no);
        if (eq == std::string::npos)
            throw std::invalid_argument(where + ": expected 'key = value', got '" + stripped + "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument(where + ": empty key");
        apply_config_entry(config, key, value, where);
    }
    config.validate();
    return config;
}

ExperimentConfig parse_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("config: cannot open " + file.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), file.filename().string());
}

void ExperimentConfig::validate() const {
    env.validate();
    train.validate();
    sensitivity.validate();
    if (n_seeds < 1) throw std::invalid_argument("config: seeds must be at least 1");
    if (episodes < 1) throw std::invalid_argument("config: episodes must be at least 1");
    if (test_episodes < 0) throw std::invalid_argument("config: test_episodes must be non-negative");
    if (dataset_episodes < 1) throw std::invalid_argument("config: dataset_episodes must be at least 1");
}

void write_config(const ExperimentConfig& c, std::ostream& out) {
    char buf[64];
    auto real = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "strategy = " << strategy_name(c.strategy) << '\n';
    out << "case = " << stress_mode_name(c.stress_case) << '\n';
    out << "seeds = " << c.n_seeds << '\n';
    out << "episodes = " << c.episodes << '\n';
    out << "test_episodes = " << c.test_episodes << '\n';
    out << "seed_base = " << c.seed_base << '\n';
    out << "out_dir = " << c.output_dir << '\n';
    out << "checkpoint_interval = " << c.checkpoint_interval << '\n';
    out << "workers = " << c.workers << '\n';
    out << "rho = " << real(c.train.projection.rho) << '\n';
    out << "margin_tightening = " << real(c.train.projection.margin_tightening) << '\n';
    out << "env.n_agents = " << c.env.n_agents << '\n';
    out << "env.dt = " << real(c.env.dt) << '\n';
    out << "env.damping = " << real(c.env.damping) << '\n';
    out << "env.mass = " << real(c.env.mass) << '\n';
    out << "env.arena_half_width = " << real(c.env.arena_half_width) << '\n';
    out << "env.collision_distance = " << real(c.env.collision_distance) << '\n';
    out << "env.collision_penalty = " << real(c.env.collision_penalty) << '\n';
    out << "env.episode_length = " << c.env.episode_length << '\n';
    out << "env.disturbance_half_width = " << real(c.env.disturbance_half_width) << '\n';
    out << "train.gamma = " << real(c.train.gamma) << '\n';
    out << "train.tau = " << real(c.train.tau) << '\n';
    out << "train.batch_size = " << c.train.batch_size << '\n';
    out << "train.actor_lr = " << real(c.train.actor_lr) << '\n';
    out << "train.critic_lr = " << real(c.train.critic_lr) << '\n';
    out << "train.noise_sigma_initial = " << real(c.train.noise_sigma_initial) << '\n';
    out << "train.noise_sigma_final = " << real(c.train.noise_sigma_final) << '\n';
    out << "train.buffer_capacity = " << c.train.buffer_capacity << '\n';
    out << "sensitivity.dataset_episodes = " << c.dataset_episodes << '\n';
    out << "sensitivity.epochs = " << c.sensitivity.epochs << '\n';
    out << "sensitivity.batch_size = " << c.sensitivity.batch_size << '\n';
    out << "sensitivity.learning_rate = " << real(c.sensitivity.learning_rate) << '\n';
    out << "sensitivity.holdout_fraction = " << real(c.sensitivity.holdout_fraction) << '\n';
    out << "sensitivity.hidden_units = " << c.sensitivity.hidden_units << '\n';
}

}  // namespace safemaddpg
