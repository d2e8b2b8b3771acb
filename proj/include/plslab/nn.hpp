#pragma once

#include "plslab/label_dist.hpp"
#include "plslab/rng.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

namespace plslab {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values; // row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct DenseLayer {
    Matrix weight; // out x in
    std::vector<double> bias;

    std::size_t inputs() const { return weight.cols; }
    std::size_t outputs() const { return weight.rows; }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Activations recorded by a forward pass. inputs[l] is the input to layer l
// (after the previous layer's tanh), so inputs[0] is the network input.
struct MlpTrace {
    std::vector<std::vector<double>> inputs;
    std::vector<double> logits;
};

// Fully connected network with tanh hidden units and linear output logits.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<DenseLayer> layers);

    // Glorot-uniform weights, zero biases.
    static Mlp glorot(std::size_t inputs, std::span<const std::size_t> hidden, std::size_t outputs, Rng& rng);
    static Mlp zeros(std::size_t inputs, std::span<const std::size_t> hidden, std::size_t outputs);

    std::size_t inputs() const;
    std::size_t outputs() const;

    MlpTrace forward(std::span<const double> x) const;

    // Accumulates parameter gradients into `grads` and returns dL/dinput.
    std::vector<double> backward(const MlpTrace& trace, std::span<const double> dlogits, Mlp& grads) const;

    Mlp zeros_like() const;

    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    friend bool operator==(const Mlp&, const Mlp&) = default;

private:
    std::vector<DenseLayer> layers_;
};

// θ (classifier g: x -> Δ) and φ (transition head f: (x, Δ) -> Δ).
struct ModelParams {
    Mlp classifier;
    Mlp transition;

    std::size_t feature_dim() const { return classifier.inputs(); }
    std::size_t num_classes() const { return classifier.outputs(); }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Gradients share the parameter layout exactly.
using Gradients = ModelParams;

Gradients zeros_like(const ModelParams& params);

struct ArchitectureSpec {
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::vector<std::size_t> classifier_hidden{64, 64};
    std::vector<std::size_t> transition_hidden{64, 64};
};

ModelParams init_params(const ArchitectureSpec& arch, Rng& rng);

struct NetOutput {
    LabelDist probs;
    MlpTrace trace;
};

NetOutput forward_classifier(const ModelParams& params, std::span<const double> x);
NetOutput forward_transition(const ModelParams& params, std::span<const double> x, const LabelDist& y_dist);

// The fixed loss graph: classifier calls produce g(x_i); transition calls
// produce f(x_i, y). A transition call whose label input was a classifier
// output names that call in `source`, so its input gradient flows back into θ.
struct ClassifierCall {
    MlpTrace trace;
    LabelDist probs;
    std::vector<double> dprobs; // dL/dprobs, empty means no contribution
};

struct TransitionCall {
    MlpTrace trace;
    LabelDist probs;
    std::vector<double> dprobs;
    std::ptrdiff_t source = -1;
};

struct LossTrace {
    std::vector<ClassifierCall> classifier_calls;
    std::vector<TransitionCall> transition_calls;
};

// dL/dlogits given dL/dprobs for a softmax output.
std::vector<double> softmax_backward(const LabelDist& probs, std::span<const double> dprobs);

Gradients backward(const ModelParams& params, LossTrace trace);

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// p <- p - lr * (g + weight_decay * p). Throws NumericalError on non-finite gradients.
void sgd_step(ModelParams& params, const Gradients& grads, double lr, double weight_decay);

// Calls fn(param, grad) for every scalar pair, in a fixed order.
template <typename Fn>
void for_each_parameter(ModelParams& params, const Gradients& grads, Fn&& fn)
{
    auto visit = [&](Mlp& net, const Mlp& g) {
        for (std::size_t l = 0; l < net.layers().size(); ++l) {
            auto& layer = net.layers()[l];
            const auto& glayer = g.layers()[l];
            for (std::size_t k = 0; k < layer.weight.values.size(); ++k) {
                fn(layer.weight.values[k], glayer.weight.values[k]);
            }
            for (std::size_t k = 0; k < layer.bias.size(); ++k) {
                fn(layer.bias[k], glayer.bias[k]);
            }
        }
    };
    visit(params.classifier, grads.classifier);
    visit(params.transition, grads.transition);
}

std::size_t parameter_count(const ModelParams& params);
bool all_finite(const ModelParams& params);

// Text checkpoint: "plslab-checkpoint 1" header, then for each network its
// layer count and every layer as "rows cols" followed by weights and biases.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

} // namespace plslab
