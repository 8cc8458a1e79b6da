#include "safemaddpg/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace safemaddpg {

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& z) {
    switch (act) {
        case Activation::Relu:
            z = z.cwiseMax(0.0);
            break;
        case Activation::Tanh:
            z = z.array().tanh();
            break;
        case Activation::Identity:
            break;
    }
}

// derivative expressed through pre-activation z and activation value h
Eigen::MatrixXd activation_derivative(Activation act, const Eigen::MatrixXd& z, const Eigen::MatrixXd& h) {
    switch (act) {
        case Activation::Relu:
            // derivative at exactly 0 is taken as 0
            return (z.array() > 0.0).cast<double>();
        case Activation::Tanh:
            return 1.0 - h.array().square();
        case Activation::Identity:
            return Eigen::MatrixXd::Ones(z.rows(), z.cols());
    }
    return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

void check_parameter_shapes(const Mlp& mlp, const std::vector<Eigen::MatrixXd>& wg,
                            const std::vector<Eigen::VectorXd>& bg) {
    if (wg.size() != mlp.weights.size() || bg.size() != mlp.biases.size())
        throw std::invalid_argument("gradient layer count does not match network");
    for (std::size_t l = 0; l < wg.size(); ++l) {
        if (wg[l].rows() != mlp.weights[l].rows() || wg[l].cols() != mlp.weights[l].cols() ||
            bg[l].size() != mlp.biases[l].size())
            throw std::invalid_argument("gradient shape does not match network layer " + std::to_string(l));
    }
}

}  // namespace

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation: " + name);
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (int l = 0; l < n_layers(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

void GradBundle::scale(double s) {
    for (auto& w : weight_grads) w *= s;
    for (auto& b : bias_grads) b *= s;
    input_grad *= s;
}

void GradBundle::add(const GradBundle& other) {
    for (std::size_t l = 0; l < weight_grads.size(); ++l) {
        weight_grads[l] += other.weight_grads[l];
        bias_grads[l] += other.bias_grads[l];
    }
    input_grad += other.input_grad;
}

double GradBundle::squared_norm() const {
    double s = 0.0;
    for (const auto& w : weight_grads) s += w.squaredNorm();
    for (const auto& b : bias_grads) s += b.squaredNorm();
    return s;
}

Mlp init_mlp(const std::vector<int>& layer_dims, Activation hidden, Activation output, Rng& rng) {
    if (layer_dims.size() < 2)
        throw std::invalid_argument("layer_dims needs at least input and output sizes");
    for (int d : layer_dims)
        if (d <= 0) throw std::invalid_argument("layer_dims entries must be positive");

    Mlp mlp;
    mlp.layer_dims = layer_dims;
    mlp.hidden_activation = hidden;
    mlp.output_activation = output;
    const int n_layers = static_cast<int>(layer_dims.size()) - 1;
    mlp.weights.reserve(n_layers);
    mlp.biases.reserve(n_layers);
    for (int l = 0; l < n_layers; ++l) {
        const int fan_in = layer_dims[l];
        const int fan_out = layer_dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i)
            for (int j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-bound, bound);
        mlp.weights.push_back(std::move(w));
        mlp.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return mlp;
}

AdamState make_adam_state(const Mlp& mlp, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    for (int l = 0; l < mlp.n_layers(); ++l) {
        s.weight_m.push_back(Eigen::MatrixXd::Zero(mlp.weights[l].rows(), mlp.weights[l].cols()));
        s.weight_v.push_back(Eigen::MatrixXd::Zero(mlp.weights[l].rows(), mlp.weights[l].cols()));
        s.bias_m.push_back(Eigen::VectorXd::Zero(mlp.biases[l].size()));
        s.bias_v.push_back(Eigen::VectorXd::Zero(mlp.biases[l].size()));
    }
    return s;
}

Eigen::VectorXd forward(const Mlp& mlp, const Eigen::VectorXd& input) {
    if (input.size() != mlp.input_dim())
        throw std::invalid_argument("forward: input has length " + std::to_string(input.size()) +
                                    ", expected " + std::to_string(mlp.input_dim()));
    Eigen::VectorXd h = input;
    for (int l = 0; l < mlp.n_layers(); ++l) {
        Eigen::VectorXd z = mlp.weights[l] * h + mlp.biases[l];
        const Activation act = (l + 1 == mlp.n_layers()) ? mlp.output_activation : mlp.hidden_activation;
        switch (act) {
            case Activation::Relu: z = z.cwiseMax(0.0); break;
            case Activation::Tanh: z = z.array().tanh(); break;
            case Activation::Identity: break;
        }
        h = std::move(z);
    }
    return h;
}

GradBundle backward(const Mlp& mlp, const Eigen::VectorXd& input, const Eigen::VectorXd& upstream_grad) {
    if (input.size() != mlp.input_dim())
        throw std::invalid_argument("backward: input length mismatch");
    if (upstream_grad.size() != mlp.output_dim())
        throw std::invalid_argument("backward: upstream gradient length mismatch");

    const int L = mlp.n_layers();
    std::vector<Eigen::VectorXd> activations(L + 1);
    std::vector<Eigen::VectorXd> pre(L);
    activations[0] = input;
    for (int l = 0; l < L; ++l) {
        pre[l] = mlp.weights[l] * activations[l] + mlp.biases[l];
        Eigen::VectorXd h = pre[l];
        const Activation act = (l + 1 == L) ? mlp.output_activation : mlp.hidden_activation;
        switch (act) {
            case Activation::Relu: h = h.cwiseMax(0.0); break;
            case Activation::Tanh: h = h.array().tanh(); break;
            case Activation::Identity: break;
        }
        activations[l + 1] = std::move(h);
    }

    GradBundle g;
    g.weight_grads.resize(L);
    g.bias_grads.resize(L);
    Eigen::VectorXd delta = upstream_grad;
    for (int l = L - 1; l >= 0; --l) {
        const Activation act = (l + 1 == L) ? mlp.output_activation : mlp.hidden_activation;
        switch (act) {
            case Activation::Relu:
                delta = delta.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
                break;
            case Activation::Tanh:
                delta = delta.cwiseProduct((1.0 - activations[l + 1].array().square()).matrix());
                break;
            case Activation::Identity:
                break;
        }
        g.weight_grads[l] = delta * activations[l].transpose();
        g.bias_grads[l] = delta;
        delta = mlp.weights[l].transpose() * delta;
    }
    g.input_grad = std::move(delta);
    return g;
}

namespace {

template <typename T>
void adam_update(T& param, const T& grad, T& m, T& v, const AdamState& s, double bias1, double bias2) {
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v.array() = s.beta2 * v.array() + (1.0 - s.beta2) * grad.array().square();
    param.array() -= s.learning_rate * (m.array() / bias1) / ((v.array() / bias2).sqrt() + s.epsilon);
}

template <typename WG, typename BG>
void adam_step_impl(Mlp& mlp, const WG& weight_grads, const BG& bias_grads, AdamState& state) {
    state.step_count += 1;
    const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (int l = 0; l < mlp.n_layers(); ++l) {
        adam_update(mlp.weights[l], weight_grads[l], state.weight_m[l], state.weight_v[l], state, bias1, bias2);
        adam_update(mlp.biases[l], bias_grads[l], state.bias_m[l], state.bias_v[l], state, bias1, bias2);
    }
}

}  // namespace

void adam_step(Mlp& mlp, const GradBundle& grads, AdamState& state) {
    check_parameter_shapes(mlp, grads.weight_grads, grads.bias_grads);
    adam_step_impl(mlp, grads.weight_grads, grads.bias_grads, state);
}

Eigen::MatrixXd forward_batch(const Mlp& mlp, const Eigen::MatrixXd& inputs) {
    BatchTrace trace;
    return forward_batch(mlp, inputs, trace);
}

Eigen::MatrixXd forward_batch(const Mlp& mlp, const Eigen::MatrixXd& inputs, BatchTrace& trace) {
    if (inputs.cols() != mlp.input_dim())
        throw std::invalid_argument("forward_batch: input width mismatch");
    const int L = mlp.n_layers();
    trace.activations.assign(static_cast<std::size_t>(L) + 1, Eigen::MatrixXd());
    trace.preactivations.assign(static_cast<std::size_t>(L), Eigen::MatrixXd());
    trace.activations[0] = inputs;
    for (int l = 0; l < L; ++l) {
        Eigen::MatrixXd z = trace.activations[l] * mlp.weights[l].transpose();
        z.rowwise() += mlp.biases[l].transpose();
        trace.preactivations[l] = z;
        const Activation act = (l + 1 == L) ? mlp.output_activation : mlp.hidden_activation;
        apply_activation(act, z);
        trace.activations[l + 1] = std::move(z);
    }
    return trace.activations.back();
}

BatchGrads backward_batch(const Mlp& mlp, const BatchTrace& trace, const Eigen::MatrixXd& upstream_grads,
                          bool want_param_grads, bool want_input_grads) {
    const int L = mlp.n_layers();
    if (trace.activations.size() != static_cast<std::size_t>(L) + 1)
        throw std::invalid_argument("backward_batch: trace does not match network");
    if (upstream_grads.rows() != trace.activations[0].rows() || upstream_grads.cols() != mlp.output_dim())
        throw std::invalid_argument("backward_batch: upstream gradient shape mismatch");

    BatchGrads g;
    if (want_param_grads) {
        g.weight_grads.resize(L);
        g.bias_grads.resize(L);
    }
    Eigen::MatrixXd delta = upstream_grads;
    for (int l = L - 1; l >= 0; --l) {
        const Activation act = (l + 1 == L) ? mlp.output_activation : mlp.hidden_activation;
        delta.array() *= activation_derivative(act, trace.preactivations[l], trace.activations[l + 1]).array();
        if (want_param_grads) {
            g.weight_grads[l].noalias() = delta.transpose() * trace.activations[l];
            g.bias_grads[l] = delta.colwise().sum().transpose();
        }
        if (l > 0 || want_input_grads) delta = delta * mlp.weights[l];
    }
    if (want_input_grads) g.input_grads = std::move(delta);
    return g;
}

void adam_step_batch(Mlp& mlp, const BatchGrads& grads, AdamState& state) {
    check_parameter_shapes(mlp, grads.weight_grads, grads.bias_grads);
    adam_step_impl(mlp, grads.weight_grads, grads.bias_grads, state);
}

namespace {

constexpr double kFdStep = 1e-5;

double scalar_output(const Mlp& mlp, const Eigen::VectorXd& input, const Eigen::VectorXd& upstream) {
    return upstream.dot(forward(mlp, input));
}

// central finite difference for one parameter or input entry
double fd_probe(Mlp& mlp, Eigen::VectorXd& input, const Eigen::VectorXd& upstream, double* entry) {
    const double saved = *entry;
    *entry = saved + kFdStep;
    const double plus = scalar_output(mlp, input, upstream);
    *entry = saved - kFdStep;
    const double minus = scalar_output(mlp, input, upstream);
    *entry = saved;
    return (plus - minus) / (2.0 * kFdStep);
}

double relative_deviation(double analytic, double numeric) {
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

}  // namespace

GradCheckReport grad_check(const Mlp& mlp, const Eigen::VectorXd& input, double tolerance) {
    Eigen::VectorXd upstream = Eigen::VectorXd::Ones(mlp.output_dim());
    return grad_check(mlp, input, tolerance, backward(mlp, input, upstream));
}

GradCheckReport grad_check(const Mlp& mlp, const Eigen::VectorXd& input, double tolerance,
                           const GradBundle& candidate) {
    if (tolerance <= 0.0) throw std::invalid_argument("grad_check: tolerance must be positive");
    Eigen::VectorXd upstream = Eigen::VectorXd::Ones(mlp.output_dim());
    Mlp work = mlp;
    Eigen::VectorXd x = input;

    GradCheckReport report;
    auto consider = [&](double analytic, double numeric, int layer, bool is_bias, long flat) {
        const double dev = relative_deviation(analytic, numeric);
        ++report.probes_checked;
        if (dev > report.max_relative_deviation) {
            report.max_relative_deviation = dev;
            report.worst_layer = layer;
            report.worst_is_bias = is_bias;
            report.worst_flat_index = flat;
        }
    };

    for (int l = 0; l < work.n_layers(); ++l) {
        for (long i = 0; i < work.weights[l].size(); ++i) {
            const double numeric = fd_probe(work, x, upstream, work.weights[l].data() + i);
            consider(candidate.weight_grads[l](i), numeric, l, false, i);
        }
        for (long i = 0; i < work.biases[l].size(); ++i) {
            const double numeric = fd_probe(work, x, upstream, work.biases[l].data() + i);
            consider(candidate.bias_grads[l](i), numeric, l, true, i);
        }
    }
    for (long i = 0; i < x.size(); ++i) {
        const double numeric = fd_probe(work, x, upstream, x.data() + i);
        consider(candidate.input_grad(i), numeric, -1, false, i);
    }
    report.pass = report.max_relative_deviation <= tolerance;
    return report;
}

GradCheckReport grad_check_sampled(const Mlp& mlp, const Eigen::VectorXd& input, double tolerance,
                                   long n_probes, Rng& rng) {
    if (tolerance <= 0.0) throw std::invalid_argument("grad_check_sampled: tolerance must be positive");
    Eigen::VectorXd upstream = Eigen::VectorXd::Ones(mlp.output_dim());
    const GradBundle analytic = backward(mlp, input, upstream);
    Mlp work = mlp;
    Eigen::VectorXd x = input;

    // flat probe space: all weights, then all biases, then the input
    std::vector<long> layer_w_offsets, layer_b_offsets;
    long total = 0;
    for (int l = 0; l < work.n_layers(); ++l) {
        layer_w_offsets.push_back(total);
        total += work.weights[l].size();
    }
    for (int l = 0; l < work.n_layers(); ++l) {
        layer_b_offsets.push_back(total);
        total += work.biases[l].size();
    }
    const long input_offset = total;
    total += x.size();

    GradCheckReport report;
    for (long p = 0; p < n_probes; ++p) {
        const long idx = static_cast<long>(rng.below(static_cast<std::uint64_t>(total)));
        double analytic_entry = 0.0, numeric = 0.0;
        int layer = -1;
        bool is_bias = false;
        long flat = 0;
        if (idx >= input_offset) {
            flat = idx - input_offset;
            numeric = fd_probe(work, x, upstream, x.data() + flat);
            analytic_entry = analytic.input_grad(flat);
        } else {
            for (int l = work.n_layers() - 1; l >= 0; --l) {
                if (idx >= layer_b_offsets[l]) {
                    layer = l;
                    is_bias = true;
                    flat = idx - layer_b_offsets[l];
                    break;
                }
                if (idx >= layer_w_offsets[l] && idx < layer_w_offsets[l] + work.weights[l].size()) {
                    layer = l;
                    flat = idx - layer_w_offsets[l];
                    break;
                }
            }
            double* entry = is_bias ? work.biases[layer].data() + flat : work.weights[layer].data() + flat;
            numeric = fd_probe(work, x, upstream, entry);
            analytic_entry = is_bias ? analytic.bias_grads[layer](flat) : analytic.weight_grads[layer](flat);
        }
        const double dev = relative_deviation(analytic_entry, numeric);
        ++report.probes_checked;
        if (dev > report.max_relative_deviation) {
            report.max_relative_deviation = dev;
            report.worst_layer = layer;
            report.worst_is_bias = is_bias;
            report.worst_flat_index = flat;
        }
    }
    report.pass = report.max_relative_deviation <= tolerance;
    return report;
}

double min_relu_gap(const Mlp& mlp, const Eigen::VectorXd& input) {
    double gap = std::numeric_limits<double>::infinity();
    Eigen::VectorXd h = input;
    for (int l = 0; l < mlp.n_layers(); ++l) {
        Eigen::VectorXd z = mlp.weights[l] * h + mlp.biases[l];
        const Activation act = (l + 1 == mlp.n_layers()) ? mlp.output_activation : mlp.hidden_activation;
        if (act == Activation::Relu) gap = std::min(gap, z.cwiseAbs().minCoeff());
        switch (act) {
            case Activation::Relu: z = z.cwiseMax(0.0); break;
            case Activation::Tanh: z = z.array().tanh(); break;
            case Activation::Identity: break;
        }
        h = std::move(z);
    }
    return gap;
}

}  // namespace safemaddpg
