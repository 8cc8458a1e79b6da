#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "safemaddpg/checkpoint.hpp"
#include "safemaddpg/mlp.hpp"

using namespace safemaddpg;

namespace {

Eigen::VectorXd random_vector(long n, Rng& rng, double scale = 1.0) {
    return Eigen::VectorXd::NullaryExpr(n, [&](long) { return scale * rng.normal(); });
}

// resample until every hidden relu pre-activation is clear of the kink,
// so finite differences cannot switch a unit on or off
Eigen::VectorXd kink_free_input(const Mlp& mlp, Rng& rng, double margin = 1e-3) {
    for (int attempt = 0; attempt < 200; ++attempt) {
        Eigen::VectorXd x = random_vector(mlp.input_dim(), rng);
        if (min_relu_gap(mlp, x) > margin) return x;
    }
    FAIL("could not find a kink-free input");
    return Eigen::VectorXd::Zero(mlp.input_dim());
}

}  // namespace

TEST_CASE("init_mlp produces the documented shapes") {
    Rng rng(7);
    const Mlp mlp = init_mlp({10, 10, 1}, Activation::Relu, Activation::Identity, rng);
    REQUIRE(mlp.n_layers() == 2);
    CHECK(mlp.weights[0].rows() == 10);
    CHECK(mlp.weights[0].cols() == 10);
    CHECK(mlp.weights[1].rows() == 1);
    CHECK(mlp.weights[1].cols() == 10);
    CHECK(mlp.biases[0].size() == 10);
    CHECK(mlp.biases[1].size() == 1);
    for (const auto& b : mlp.biases) CHECK(b.isZero());
    // weights bounded by 1/sqrt(fan_in)
    CHECK(mlp.weights[0].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(10.0));
}

TEST_CASE("init_mlp builds the actor architecture") {
    Rng rng(3);
    const Mlp actor = init_mlp({10, 100, 500, 2}, Activation::Relu, Activation::Tanh, rng);
    CHECK(actor.parameter_count() == 10 * 100 + 100 + 100 * 500 + 500 + 500 * 2 + 2);
    CHECK(actor.output_dim() == 2);
}

TEST_CASE("init_mlp rejects degenerate layer lists") {
    Rng rng(1);
    CHECK_THROWS_AS(init_mlp({5}, Activation::Relu, Activation::Identity, rng), std::invalid_argument);
    CHECK_THROWS_AS(init_mlp({}, Activation::Relu, Activation::Identity, rng), std::invalid_argument);
    CHECK_THROWS_AS(init_mlp({4, 0, 2}, Activation::Relu, Activation::Identity, rng), std::invalid_argument);
}

TEST_CASE("forward: zero network with tanh output maps everything to zero") {
    Rng rng(11);
    Mlp mlp = init_mlp({4, 3, 2}, Activation::Relu, Activation::Tanh, rng);
    for (auto& w : mlp.weights) w.setZero();
    const Eigen::VectorXd out = forward(mlp, random_vector(4, rng));
    CHECK(out.isZero());
}

TEST_CASE("forward: single identity layer is the identity map") {
    Mlp mlp;
    mlp.layer_dims = {3, 3};
    mlp.weights = {Eigen::MatrixXd::Identity(3, 3)};
    mlp.biases = {Eigen::VectorXd::Zero(3)};
    mlp.output_activation = Activation::Identity;
    Eigen::VectorXd v(3);
    v << 0.5, -1.25, 2.0;
    CHECK(forward(mlp, v) == v);
}

TEST_CASE("forward: hand-evaluated 1-2-1 relu composition") {
    Mlp mlp;
    mlp.layer_dims = {1, 2, 1};
    Eigen::MatrixXd w0(2, 1);
    w0 << 2.0, -3.0;
    Eigen::VectorXd b0(2);
    b0 << -1.0, 0.5;
    Eigen::MatrixXd w1(1, 2);
    w1 << 1.5, -2.0;
    Eigen::VectorXd b1(1);
    b1 << 0.25;
    mlp.weights = {w0, w1};
    mlp.biases = {b0, b1};
    mlp.hidden_activation = Activation::Relu;
    mlp.output_activation = Activation::Identity;

    // x = 1: hidden = [max(0, 2*1-1), max(0, -3*1+0.5)] = [1, 0]
    //        out = 1.5*1 - 2*0 + 0.25 = 1.75
    Eigen::VectorXd x(1);
    x << 1.0;
    CHECK(forward(mlp, x)(0) == doctest::Approx(1.75).epsilon(1e-12));

    // x = -1: hidden = [max(0, -3), max(0, 3.5)] = [0, 3.5]
    //         out = -2*3.5 + 0.25 = -6.75
    x << -1.0;
    CHECK(forward(mlp, x)(0) == doctest::Approx(-6.75).epsilon(1e-12));
}

TEST_CASE("forward rejects dimension mismatches") {
    Rng rng(5);
    const Mlp mlp = init_mlp({4, 3, 2}, Activation::Relu, Activation::Identity, rng);
    CHECK_THROWS_AS(forward(mlp, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST_CASE("forward is deterministic") {
    Rng rng(13);
    const Mlp mlp = init_mlp({6, 8, 4}, Activation::Relu, Activation::Tanh, rng);
    const Eigen::VectorXd x = random_vector(6, rng);
    const Eigen::VectorXd a = forward(mlp, x);
    const Eigen::VectorXd b = forward(mlp, x);
    CHECK(a == b);  // bitwise
}

TEST_CASE("tanh outputs stay strictly inside (-1, 1)") {
    Rng rng(17);
    const Mlp mlp = init_mlp({10, 100, 500, 2}, Activation::Relu, Activation::Tanh, rng);
    for (int i = 0; i < 50; ++i) {
        const Eigen::VectorXd out = forward(mlp, random_vector(10, rng, 3.0));
        CHECK(out.cwiseAbs().maxCoeff() < 1.0);
    }
}

TEST_CASE("backward: zero upstream gradient zeroes everything") {
    Rng rng(19);
    const Mlp mlp = init_mlp({5, 4, 3}, Activation::Relu, Activation::Tanh, rng);
    const GradBundle g = backward(mlp, random_vector(5, rng), Eigen::VectorXd::Zero(3));
    for (const auto& w : g.weight_grads) CHECK(w.isZero());
    for (const auto& b : g.bias_grads) CHECK(b.isZero());
    CHECK(g.input_grad.isZero());
}

TEST_CASE("backward: single linear layer has closed-form gradients") {
    Rng rng(23);
    Mlp mlp;
    mlp.layer_dims = {3, 2};
    mlp.weights = {Eigen::MatrixXd::NullaryExpr(2, 3, [&](long, long) { return rng.normal(); })};
    mlp.biases = {random_vector(2, rng)};
    mlp.output_activation = Activation::Identity;
    const Eigen::VectorXd x = random_vector(3, rng);
    const Eigen::VectorXd g = random_vector(2, rng);

    const GradBundle grads = backward(mlp, x, g);
    CHECK((grads.weight_grads[0] - g * x.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((grads.bias_grads[0] - g).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((grads.input_grad - mlp.weights[0].transpose() * g).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("backward matches finite differences on a random relu net") {
    Rng rng(29);
    const Mlp mlp = init_mlp({10, 10, 1}, Activation::Relu, Activation::Identity, rng);
    const Eigen::VectorXd x = kink_free_input(mlp, rng);
    const GradCheckReport report = grad_check(mlp, x, 1e-4);
    INFO("max deviation ", report.max_relative_deviation);
    CHECK(report.pass);
}

TEST_CASE("grad_check: exact on a linear 2-1 network") {
    Rng rng(31);
    const Mlp mlp = init_mlp({2, 1}, Activation::Relu, Activation::Identity, rng);
    const GradCheckReport report = grad_check(mlp, random_vector(2, rng), 1e-6);
    CHECK(report.pass);
    CHECK(report.max_relative_deviation < 1e-8);
}

TEST_CASE("grad_check passes on a 10-10-6 relu net and catches corruption") {
    Rng rng(37);
    const Mlp mlp = init_mlp({10, 10, 6}, Activation::Relu, Activation::Identity, rng);
    const Eigen::VectorXd x = kink_free_input(mlp, rng);
    CHECK(grad_check(mlp, x, 1e-4).pass);

    GradBundle corrupted = backward(mlp, x, Eigen::VectorXd::Ones(6));
    long row = 0, col = 0;
    corrupted.weight_grads[0].cwiseAbs().maxCoeff(&row, &col);
    corrupted.weight_grads[0](row, col) *= 2.0;  // inject a fault
    CHECK_FALSE(grad_check(mlp, x, 1e-4, corrupted).pass);
}

TEST_CASE("grad_check_sampled agrees with the full sweep on small nets") {
    Rng rng(41);
    const Mlp mlp = init_mlp({6, 8, 3}, Activation::Relu, Activation::Tanh, rng);
    const Eigen::VectorXd x = kink_free_input(mlp, rng);
    Rng probe_rng(43);
    const GradCheckReport report = grad_check_sampled(mlp, x, 1e-4, 200, probe_rng);
    CHECK(report.pass);
    CHECK(report.probes_checked == 200);
}

TEST_CASE("adam: zero gradient leaves parameters fixed") {
    Rng rng(47);
    Mlp mlp = init_mlp({3, 4, 2}, Activation::Relu, Activation::Identity, rng);
    const Mlp before = mlp;
    AdamState state = make_adam_state(mlp, 1e-3);
    GradBundle zero;
    for (int l = 0; l < mlp.n_layers(); ++l) {
        zero.weight_grads.push_back(Eigen::MatrixXd::Zero(mlp.weights[l].rows(), mlp.weights[l].cols()));
        zero.bias_grads.push_back(Eigen::VectorXd::Zero(mlp.biases[l].size()));
    }
    zero.input_grad = Eigen::VectorXd::Zero(3);
    adam_step(mlp, zero, state);
    CHECK(state.step_count == 1);
    for (int l = 0; l < mlp.n_layers(); ++l) {
        CHECK(mlp.weights[l] == before.weights[l]);
        CHECK(mlp.biases[l] == before.biases[l]);
    }
}

TEST_CASE("adam: first step on a scalar moves by about -lr") {
    // hand evaluation at t=1: m-hat = g, v-hat = g^2, step = lr/(1+eps)
    Mlp mlp;
    mlp.layer_dims = {1, 1};
    mlp.weights = {Eigen::MatrixXd::Zero(1, 1)};
    mlp.biases = {Eigen::VectorXd::Zero(1)};
    AdamState state = make_adam_state(mlp, 0.1);
    GradBundle g;
    g.weight_grads = {Eigen::MatrixXd::Constant(1, 1, 1.0)};
    g.bias_grads = {Eigen::VectorXd::Zero(1)};
    g.input_grad = Eigen::VectorXd::Zero(1);
    adam_step(mlp, g, state);
    CHECK(mlp.weights[0](0, 0) == doctest::Approx(-0.1).epsilon(1e-7));
    CHECK(state.step_count == 1);

    adam_step(mlp, g, state);
    CHECK(state.step_count == 2);
    CHECK(mlp.weights[0](0, 0) < -0.1);  // keeps moving against the gradient
}

TEST_CASE("adam rejects mismatched gradient shapes") {
    Rng rng(53);
    Mlp mlp = init_mlp({3, 2}, Activation::Relu, Activation::Identity, rng);
    AdamState state = make_adam_state(mlp, 1e-3);
    GradBundle g;
    g.weight_grads = {Eigen::MatrixXd::Zero(2, 2)};  // wrong width
    g.bias_grads = {Eigen::VectorXd::Zero(2)};
    g.input_grad = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(adam_step(mlp, g, state), std::invalid_argument);
}

TEST_CASE("batched forward matches per-sample forward") {
    Rng rng(59);
    const Mlp mlp = init_mlp({7, 16, 5}, Activation::Relu, Activation::Tanh, rng);
    Eigen::MatrixXd inputs(9, 7);
    for (long i = 0; i < inputs.size(); ++i) inputs(i) = rng.normal();
    const Eigen::MatrixXd batch = forward_batch(mlp, inputs);
    for (long b = 0; b < inputs.rows(); ++b) {
        const Eigen::VectorXd single = forward(mlp, inputs.row(b).transpose());
        CHECK((batch.row(b).transpose() - single).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("batched backward sums the per-sample gradients") {
    Rng rng(61);
    const Mlp mlp = init_mlp({5, 9, 3}, Activation::Relu, Activation::Identity, rng);
    Eigen::MatrixXd inputs(6, 5);
    Eigen::MatrixXd upstream(6, 3);
    for (long i = 0; i < inputs.size(); ++i) inputs(i) = rng.normal();
    for (long i = 0; i < upstream.size(); ++i) upstream(i) = rng.normal();

    BatchTrace trace;
    forward_batch(mlp, inputs, trace);
    const BatchGrads batch = backward_batch(mlp, trace, upstream);

    GradBundle sum = backward(mlp, inputs.row(0).transpose(), upstream.row(0).transpose());
    for (long b = 1; b < inputs.rows(); ++b)
        sum.add(backward(mlp, inputs.row(b).transpose(), upstream.row(b).transpose()));

    for (int l = 0; l < mlp.n_layers(); ++l) {
        CHECK((batch.weight_grads[l] - sum.weight_grads[l]).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((batch.bias_grads[l] - sum.bias_grads[l]).cwiseAbs().maxCoeff() < 1e-10);
    }
    for (long b = 0; b < inputs.rows(); ++b) {
        const GradBundle g = backward(mlp, inputs.row(b).transpose(), upstream.row(b).transpose());
        CHECK((batch.input_grads.row(b).transpose() - g.input_grad).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    Rng rng(67);
    const Mlp mlp = init_mlp({10, 10, 6}, Activation::Relu, Activation::Identity, rng);
    std::stringstream stream;
    save_mlp(mlp, stream);
    const Mlp loaded = load_mlp(stream);

    REQUIRE(loaded.layer_dims == mlp.layer_dims);
    CHECK(loaded.hidden_activation == mlp.hidden_activation);
    CHECK(loaded.output_activation == mlp.output_activation);
    for (int l = 0; l < mlp.n_layers(); ++l) {
        CHECK(loaded.weights[l] == mlp.weights[l]);  // bitwise
        CHECK(loaded.biases[l] == mlp.biases[l]);
    }
    const Eigen::VectorXd x = random_vector(10, rng);
    CHECK(forward(mlp, x) == forward(loaded, x));
}

TEST_CASE("checkpoint round-trip survives awkward values") {
    Mlp mlp;
    mlp.layer_dims = {2, 2};
    Eigen::MatrixXd w(2, 2);
    w << 1e-308, -0.1, 3.0000000000000004, 1e17;
    mlp.weights = {w};
    Eigen::VectorXd b(2);
    b << -0.0, 0.30000000000000004;
    mlp.biases = {b};
    std::stringstream stream;
    save_mlp(mlp, stream);
    const Mlp loaded = load_mlp(stream);
    CHECK(loaded.weights[0] == mlp.weights[0]);
    CHECK(loaded.biases[0].cwiseEqual(mlp.biases[0]).all());
}

TEST_CASE("gradient correctness holds across the production architectures") {
    // trimmed version of the acceptance probe suite
    Rng rng(71);
    const std::vector<std::vector<int>> archs = {{10, 100, 500, 2}, {36, 100, 500, 1}, {30, 10, 6}};
    const std::vector<Activation> outs = {Activation::Tanh, Activation::Identity, Activation::Identity};
    for (std::size_t a = 0; a < archs.size(); ++a) {
        const Mlp mlp = init_mlp(archs[a], Activation::Relu, outs[a], rng);
        const Eigen::VectorXd x = kink_free_input(mlp, rng);
        Rng probe_rng(100 + a);
        const GradCheckReport report = grad_check_sampled(mlp, x, 1e-4, 30, probe_rng);
        INFO("architecture ", a, " max deviation ", report.max_relative_deviation);
        CHECK(report.pass);
    }
}
