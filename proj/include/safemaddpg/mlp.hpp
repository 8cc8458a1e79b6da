#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "safemaddpg/rng.hpp"

namespace safemaddpg {

enum class Activation { Relu, Identity, Tanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

/// Dense multilayer perceptron. weights[l] has shape
/// (layer_dims[l+1] x layer_dims[l]); biases[l] has length layer_dims[l+1].
/// Hidden layers share one activation, the output layer has its own.
struct Mlp {
    std::vector<int> layer_dims;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Activation hidden_activation = Activation::Relu;
    Activation output_activation = Activation::Identity;

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    int n_layers() const { return static_cast<int>(weights.size()); }
    std::size_t parameter_count() const;
};

/// Gradients of a scalar function of the network output with respect to
/// every parameter and to the input.
struct GradBundle {
    std::vector<Eigen::MatrixXd> weight_grads;
    std::vector<Eigen::VectorXd> bias_grads;
    Eigen::VectorXd input_grad;

    void scale(double s);
    void add(const GradBundle& other);
    double squared_norm() const;  // parameters only, input_grad excluded
};

struct AdamState {
    std::vector<Eigen::MatrixXd> weight_m, weight_v;
    std::vector<Eigen::VectorXd> bias_m, bias_v;
    long step_count = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

Mlp init_mlp(const std::vector<int>& layer_dims, Activation hidden, Activation output, Rng& rng);

AdamState make_adam_state(const Mlp& mlp, double learning_rate);

Eigen::VectorXd forward(const Mlp& mlp, const Eigen::VectorXd& input);

/// Reverse-mode gradients of upstream_grad . forward(mlp, input).
GradBundle backward(const Mlp& mlp, const Eigen::VectorXd& input, const Eigen::VectorXd& upstream_grad);

/// Standard Adam with bias correction; increments state.step_count.
void adam_step(Mlp& mlp, const GradBundle& grads, AdamState& state);

// --- Batched passes (rows are samples). Gradients returned by
// backward_batch are sums over the batch rows of upstream_grads.

struct BatchTrace {
    std::vector<Eigen::MatrixXd> activations;      // [input, h1, ..., output]
    std::vector<Eigen::MatrixXd> preactivations;   // z per layer
};

Eigen::MatrixXd forward_batch(const Mlp& mlp, const Eigen::MatrixXd& inputs);
Eigen::MatrixXd forward_batch(const Mlp& mlp, const Eigen::MatrixXd& inputs, BatchTrace& trace);

struct BatchGrads {
    std::vector<Eigen::MatrixXd> weight_grads;
    std::vector<Eigen::VectorXd> bias_grads;
    Eigen::MatrixXd input_grads;  // batch x input_dim
};

BatchGrads backward_batch(const Mlp& mlp, const BatchTrace& trace, const Eigen::MatrixXd& upstream_grads,
                          bool want_param_grads = true, bool want_input_grads = true);

void adam_step_batch(Mlp& mlp, const BatchGrads& grads, AdamState& state);

// --- Finite-difference verification.

struct GradCheckReport {
    bool pass = false;
    double max_relative_deviation = 0.0;
    long probes_checked = 0;
    // location of the worst probe: layer index, or -1 for the input
    int worst_layer = 0;
    bool worst_is_bias = false;
    long worst_flat_index = 0;
};

/// Compares backward() against central finite differences (step 1e-5)
/// over every parameter and input entry. Relative deviation uses a unit
/// floor: |a - n| / max(1, |a|, |n|).
GradCheckReport grad_check(const Mlp& mlp, const Eigen::VectorXd& input, double tolerance);

/// Same comparison against a caller-supplied gradient bundle.
GradCheckReport grad_check(const Mlp& mlp, const Eigen::VectorXd& input, double tolerance,
                           const GradBundle& candidate);

/// Spot-check n randomly chosen parameter/input entries instead of all of
/// them; used for large production architectures.
GradCheckReport grad_check_sampled(const Mlp& mlp, const Eigen::VectorXd& input, double tolerance,
                                   long n_probes, Rng& rng);

/// Smallest |pre-activation| over all hidden relu units; inputs for
/// finite-difference checks should keep this away from the kink.
double min_relu_gap(const Mlp& mlp, const Eigen::VectorXd& input);

}  // namespace safemaddpg
