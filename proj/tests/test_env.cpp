#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "safemaddpg/particle_env.hpp"

using namespace safemaddpg;

namespace {

WorldState make_state(std::initializer_list<std::pair<double, double>> positions,
                      std::initializer_list<std::pair<double, double>> targets) {
    WorldState s;
    const long n = static_cast<long>(positions.size());
    s.positions.resize(n, 2);
    s.velocities = Eigen::MatrixXd::Zero(n, 2);
    s.targets.resize(n, 2);
    long i = 0;
    for (const auto& [x, y] : positions) {
        s.positions(i, 0) = x;
        s.positions(i, 1) = y;
        ++i;
    }
    i = 0;
    for (const auto& [x, y] : targets) {
        s.targets(i, 0) = x;
        s.targets(i, 1) = y;
        ++i;
    }
    return s;
}

}  // namespace

TEST_CASE("reset in safe mode separates every pair") {
    EnvConfig config;
    Rng rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        const WorldState s = reset(config, rng);
        CHECK(s.step_index == 0);
        CHECK(s.velocities.isZero());
        for (int i = 0; i < config.n_agents; ++i)
            for (int k = i + 1; k < config.n_agents; ++k)
                CHECK((s.positions.row(i) - s.positions.row(k)).norm() >= config.collision_distance);
    }
}

TEST_CASE("reset in ui mode eventually produces an overlapping start") {
    EnvConfig config;
    config.stress_mode = StressMode::Ui;
    Rng rng(42);
    bool overlapping = false;
    for (int trial = 0; trial < 200 && !overlapping; ++trial) {
        const WorldState s = reset(config, rng);
        overlapping = count_collisions(s, config) > 0;
    }
    CHECK(overlapping);
}

TEST_CASE("step: zero action on a resting agent is a fixed point") {
    EnvConfig config;
    WorldState s = make_state({{0.1, 0.2}, {0.5, 0.5}, {-0.5, -0.5}}, {{0, 0}, {0, 0}, {0, 0}});
    Rng rng(1);
    const StepOutcome out = step(s, Eigen::VectorXd::Zero(6), config, rng);
    CHECK((out.next.positions - s.positions).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.next.velocities.isZero());
    CHECK(out.next.step_index == 1);
}

TEST_CASE("step: hand-evaluated dynamics update") {
    EnvConfig config;
    config.dt = 0.1;
    config.damping = 0.25;
    config.mass = 1.0;
    WorldState s = make_state({{0, 0}, {0.9, 0.9}, {-0.9, -0.9}}, {{0, 0}, {0, 0}, {0, 0}});
    Eigen::VectorXd action = Eigen::VectorXd::Zero(6);
    action(0) = 1.0;  // agent 0 accelerates along +x
    Rng rng(1);
    const StepOutcome out = step(s, action, config, rng);
    CHECK(out.next.velocities(0, 0) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(out.next.velocities(0, 1) == 0.0);
    CHECK(out.next.positions(0, 0) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("step: reward is the negative l1 distance to the target") {
    EnvConfig config;
    WorldState s = make_state({{0, 0}, {0.9, 0.9}, {-0.9, -0.9}}, {{1, 1}, {0.9, 0.9}, {-0.9, -0.9}});
    Rng rng(1);
    const StepOutcome out = step(s, Eigen::VectorXd::Zero(6), config, rng);
    CHECK(out.rewards(0) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(out.collisions == 0);
}

TEST_CASE("step: collision penalties count each colliding counterpart") {
    EnvConfig config;
    // all three agents on top of each other and on target
    WorldState s = make_state({{0, 0}, {0, 0}, {0, 0}}, {{0, 0}, {0, 0}, {0, 0}});
    Rng rng(1);
    const StepOutcome out = step(s, Eigen::VectorXd::Zero(6), config, rng);
    CHECK(out.collisions == 3);
    for (int i = 0; i < 3; ++i) CHECK(out.rewards(i) == doctest::Approx(-2.0));  // two counterparts each
}

TEST_CASE("step validates its inputs") {
    EnvConfig config;
    WorldState s = make_state({{0, 0}, {0.5, 0}, {0, 0.5}}, {{0, 0}, {0, 0}, {0, 0}});
    Rng rng(1);
    Eigen::VectorXd big = Eigen::VectorXd::Constant(6, 1.5);
    CHECK_THROWS_AS(step(s, big, config, rng), std::invalid_argument);
    CHECK_THROWS_AS(step(s, Eigen::VectorXd::Zero(4), config, rng), std::invalid_argument);
    s.step_index = config.episode_length;
    CHECK_THROWS_AS(step(s, Eigen::VectorXd::Zero(6), config, rng), std::logic_error);
}

TEST_CASE("positions clamp at the arena wall and zero the velocity") {
    EnvConfig config;
    WorldState s = make_state({{0.999, 0}, {0, 0.5}, {0, -0.5}}, {{0, 0}, {0, 0}, {0, 0}});
    s.velocities(0, 0) = 0.5;
    Eigen::VectorXd action = Eigen::VectorXd::Zero(6);
    action(0) = 1.0;
    Rng rng(1);
    const StepOutcome out = step(s, action, config, rng);
    CHECK(out.next.positions(0, 0) == config.arena_half_width);
    CHECK(out.next.velocities(0, 0) == 0.0);
}

TEST_CASE("ed mode perturbs positions inside the disturbance box") {
    EnvConfig config;
    config.stress_mode = StressMode::Ed;
    WorldState s = make_state({{0, 0}, {0.5, 0.5}, {-0.5, -0.5}}, {{0, 0}, {0, 0}, {0, 0}});
    Rng rng(9);
    double largest = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const StepOutcome out = step(s, Eigen::VectorXd::Zero(6), config, rng);
        const double shift = (out.next.positions - s.positions).cwiseAbs().maxCoeff();
        CHECK(shift <= config.disturbance_half_width);
        largest = std::max(largest, shift);
    }
    CHECK(largest > 0.0);
}

TEST_CASE("observe lays fields out as documented") {
    EnvConfig config;
    WorldState s = make_state({{1, 0}, {0, 0}, {0, 1}}, {{1, 1}, {0, 0}, {0, 0}});
    const Eigen::VectorXd obs = observe(s, 0, config);
    REQUIRE(obs.size() == 10);
    Eigen::VectorXd expect(10);
    expect << 1, 0, 0, 0, -1, 0, -1, 1, 0, 1;
    CHECK((obs - expect).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(observe(s, 3, config), std::out_of_range);
    CHECK_THROWS_AS(observe(s, -1, config), std::out_of_range);
}

TEST_CASE("observe: coincident world gives the zero observation") {
    EnvConfig config;
    const WorldState s = make_state({{0, 0}, {0, 0}, {0, 0}}, {{0, 0}, {0, 0}, {0, 0}});
    for (int i = 0; i < 3; ++i) CHECK(observe(s, i, config).isZero());
}

TEST_CASE("constraint values: direct substitution and symmetry") {
    EnvConfig config;  // d_min = 0.3
    const WorldState s = make_state({{0, 0}, {0.2, 0}, {0, 0.8}}, {{0, 0}, {0, 0}, {0, 0}});
    const Eigen::VectorXd c = constraint_values(s, config);
    REQUIRE(c.size() == 6);
    // pair (0,1) at distance 0.2: c = 0.3 - 0.2 = +0.1 on both ordered entries
    CHECK(c(0) == doctest::Approx(0.1).epsilon(1e-12));   // (0,1)
    CHECK(c(2) == doctest::Approx(0.1).epsilon(1e-12));   // (1,0)
    for (int j = 0; j < 6; ++j) {
        const auto [i, k] = constraint_pair(j, 3);
        // locate the mirrored ordered pair and compare
        for (int jj = 0; jj < 6; ++jj) {
            const auto [i2, k2] = constraint_pair(jj, 3);
            if (i2 == k && k2 == i) CHECK(c(j) == c(jj));
        }
    }
}

TEST_CASE("separated agents satisfy every constraint") {
    EnvConfig config;
    const WorldState s = make_state({{-0.8, -0.8}, {0.8, -0.8}, {0, 0.8}}, {{0, 0}, {0, 0}, {0, 0}});
    CHECK(constraint_values(s, config).maxCoeff() <= 0.0);
    CHECK(count_collisions(s, config) == 0);
}

TEST_CASE("count_collisions boundary behavior") {
    EnvConfig config;
    WorldState s = make_state({{0, 0}, {0.3, 0}, {0, 0.9}}, {{0, 0}, {0, 0}, {0, 0}});
    CHECK(count_collisions(s, config) == 0);  // exactly d_min is not a collision
    s.positions(1, 0) = 0.3 - 1e-6;
    CHECK(count_collisions(s, config) == 1);
    s = make_state({{0, 0}, {0, 0}, {0, 0}}, {{0, 0}, {0, 0}, {0, 0}});
    CHECK(count_collisions(s, config) == 3);
}

TEST_CASE("collision count equals pairs with positive constraint entries") {
    EnvConfig config;
    Rng rng(77);
    config.stress_mode = StressMode::Ui;
    for (int trial = 0; trial < 200; ++trial) {
        const WorldState s = reset(config, rng);
        const Eigen::VectorXd c = constraint_values(s, config);
        int pairs_violated = 0;
        for (int j = 0; j < 6; ++j) {
            const auto [i, k] = constraint_pair(j, 3);
            if (i < k && c(j) > 0.0) ++pairs_violated;
        }
        CHECK(pairs_violated == count_collisions(s, config));
    }
}

TEST_CASE("environment is deterministic under a shared seed") {
    EnvConfig config;
    config.stress_mode = StressMode::Ed;
    Rng rng_a(123), rng_b(123);
    const WorldState a = reset(config, rng_a);
    const WorldState b = reset(config, rng_b);
    CHECK(a.positions == b.positions);
    CHECK(a.targets == b.targets);
    Eigen::VectorXd action(6);
    action << 0.3, -0.2, 0.1, 0.9, -0.8, 0.0;
    const StepOutcome oa = step(a, action, config, rng_a);
    const StepOutcome ob = step(b, action, config, rng_b);
    CHECK(oa.next.positions == ob.next.positions);
    CHECK(oa.rewards == ob.rewards);
}

TEST_CASE("safe starts stay collision-free under zero action") {
    EnvConfig config;
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        WorldState s = reset(config, rng);
        for (int t = 0; t < 5; ++t) {
            const StepOutcome out = step(s, Eigen::VectorXd::Zero(6), config, rng);
            CHECK(out.collisions == 0);
            s = out.next;
        }
    }
}

TEST_CASE("reward rises as an agent moves toward its target") {
    EnvConfig config;
    Rng rng(1);
    WorldState near = make_state({{0.5, 0.5}, {-0.8, 0}, {0.8, 0}}, {{0.6, 0.6}, {-0.8, 0}, {0.8, 0}});
    WorldState far = make_state({{0.2, 0.2}, {-0.8, 0}, {0.8, 0}}, {{0.6, 0.6}, {-0.8, 0}, {0.8, 0}});
    const double r_near = step(near, Eigen::VectorXd::Zero(6), config, rng).rewards(0);
    const double r_far = step(far, Eigen::VectorXd::Zero(6), config, rng).rewards(0);
    CHECK(r_near > r_far);
}

TEST_CASE("episode trace rows have the documented shape") {
    EnvConfig config;
    Rng rng(3);
    WorldState s = reset(config, rng);
    std::ostringstream out;
    write_trace_header(out, config);
    Eigen::VectorXd action = Eigen::VectorXd::Constant(6, 0.1);
    const StepOutcome outcome = step(s, action, config, rng);
    write_trace_row(out, 0, 0, s, action, outcome, config);

    std::istringstream in(out.str());
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    const auto commas = [](const std::string& str) { return std::count(str.begin(), str.end(), ','); };
    CHECK(commas(header) == commas(row));
    CHECK(header.rfind("episode,step,px0,py0,vx0,vy0,ax0,ay0,reward0", 0) == 0);
}
