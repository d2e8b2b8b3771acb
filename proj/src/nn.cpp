#include "plslab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

namespace plslab {

namespace {

constexpr const char* kCheckpointMagic = "plslab-checkpoint";
constexpr int kCheckpointVersion = 1;

void check_layers(const std::vector<DenseLayer>& layers)
{
    if (layers.empty()) {
        throw std::invalid_argument("Mlp: need at least one layer");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].bias.size() != layers[l].outputs()) {
            throw std::invalid_argument("Mlp: bias size does not match layer " + std::to_string(l));
        }
        if (l > 0 && layers[l].inputs() != layers[l - 1].outputs()) {
            throw std::invalid_argument("Mlp: layer shapes do not compose at layer " + std::to_string(l));
        }
    }
}

std::vector<std::size_t> layer_sizes(std::size_t inputs, std::span<const std::size_t> hidden, std::size_t outputs)
{
    std::vector<std::size_t> sizes{inputs};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(outputs);
    return sizes;
}

} // namespace

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { check_layers(layers_); }

Mlp Mlp::glorot(std::size_t inputs, std::span<const std::size_t> hidden, std::size_t outputs, Rng& rng)
{
    const auto sizes = layer_sizes(inputs, hidden, outputs);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        DenseLayer layer{Matrix(sizes[l + 1], sizes[l]), std::vector<double>(sizes[l + 1], 0.0)};
        const double bound = std::sqrt(6.0 / static_cast<double>(sizes[l] + sizes[l + 1]));
        for (double& w : layer.weight.values) {
            w = (2.0 * rng.uniform() - 1.0) * bound;
        }
        layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
}

Mlp Mlp::zeros(std::size_t inputs, std::span<const std::size_t> hidden, std::size_t outputs)
{
    const auto sizes = layer_sizes(inputs, hidden, outputs);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        layers.push_back({Matrix(sizes[l + 1], sizes[l]), std::vector<double>(sizes[l + 1], 0.0)});
    }
    return Mlp(std::move(layers));
}

std::size_t Mlp::inputs() const { return layers_.empty() ? 0 : layers_.front().inputs(); }
std::size_t Mlp::outputs() const { return layers_.empty() ? 0 : layers_.back().outputs(); }

MlpTrace Mlp::forward(std::span<const double> x) const
{
    if (x.size() != inputs()) {
        throw std::invalid_argument("Mlp::forward: expected input of size " + std::to_string(inputs()) + ", got " +
                                    std::to_string(x.size()));
    }
    MlpTrace trace;
    trace.inputs.reserve(layers_.size());
    trace.inputs.emplace_back(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        const auto& in = trace.inputs.back();
        std::vector<double> out(layer.bias);
        for (std::size_t r = 0; r < layer.outputs(); ++r) {
            const auto w = layer.weight.row(r);
            double acc = 0.0;
            for (std::size_t c = 0; c < in.size(); ++c) {
                acc += w[c] * in[c];
            }
            out[r] += acc;
        }
        if (l + 1 < layers_.size()) {
            for (double& v : out) {
                v = std::tanh(v);
            }
            trace.inputs.push_back(std::move(out));
        } else {
            trace.logits = std::move(out);
        }
    }
    return trace;
}

std::vector<double> Mlp::backward(const MlpTrace& trace, std::span<const double> dlogits, Mlp& grads) const
{
    if (trace.inputs.size() != layers_.size() || trace.logits.size() != outputs()) {
        throw std::invalid_argument("Mlp::backward: trace does not belong to this network");
    }
    if (dlogits.size() != outputs()) {
        throw std::invalid_argument("Mlp::backward: gradient size mismatch");
    }
    std::vector<double> delta(dlogits.begin(), dlogits.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& layer = layers_[l];
        auto& glayer = grads.layers_[l];
        const auto& in = trace.inputs[l];
        std::vector<double> dinput(layer.inputs(), 0.0);
        for (std::size_t r = 0; r < layer.outputs(); ++r) {
            const double d = delta[r];
            if (d == 0.0) {
                continue;
            }
            glayer.bias[r] += d;
            auto gw = glayer.weight.row(r);
            const auto w = layer.weight.row(r);
            for (std::size_t c = 0; c < in.size(); ++c) {
                gw[c] += d * in[c];
                dinput[c] += d * w[c];
            }
        }
        if (l > 0) {
            // in = tanh(pre), so dpre = dinput * (1 - in^2).
            for (std::size_t c = 0; c < in.size(); ++c) {
                dinput[c] *= 1.0 - in[c] * in[c];
            }
        }
        delta = std::move(dinput);
    }
    return delta;
}

Mlp Mlp::zeros_like() const
{
    Mlp out = *this;
    for (auto& layer : out.layers_) {
        std::fill(layer.weight.values.begin(), layer.weight.values.end(), 0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    return out;
}

Gradients zeros_like(const ModelParams& params)
{
    return {params.classifier.zeros_like(), params.transition.zeros_like()};
}

ModelParams init_params(const ArchitectureSpec& arch, Rng& rng)
{
    if (arch.feature_dim == 0 || arch.num_classes < 2) {
        throw std::invalid_argument("init_params: need feature_dim >= 1 and num_classes >= 2");
    }
    ModelParams params;
    params.classifier = Mlp::glorot(arch.feature_dim, arch.classifier_hidden, arch.num_classes, rng);
    params.transition =
        Mlp::glorot(arch.feature_dim + arch.num_classes, arch.transition_hidden, arch.num_classes, rng);
    return params;
}

NetOutput forward_classifier(const ModelParams& params, std::span<const double> x)
{
    auto trace = params.classifier.forward(x);
    auto probs = softmax(trace.logits);
    return {std::move(probs), std::move(trace)};
}

NetOutput forward_transition(const ModelParams& params, std::span<const double> x, const LabelDist& y_dist)
{
    const std::size_t classes = params.transition.outputs();
    if (y_dist.size() != classes) {
        throw std::invalid_argument("forward_transition: label distribution has " + std::to_string(y_dist.size()) +
                                    " entries, expected " + std::to_string(classes));
    }
    if (x.size() + classes != params.transition.inputs()) {
        throw std::invalid_argument("forward_transition: feature dimension mismatch");
    }
    std::vector<double> input(x.begin(), x.end());
    input.insert(input.end(), y_dist.probs().begin(), y_dist.probs().end());
    auto trace = params.transition.forward(input);
    auto probs = softmax(trace.logits);
    return {std::move(probs), std::move(trace)};
}

std::vector<double> softmax_backward(const LabelDist& probs, std::span<const double> dprobs)
{
    double dot = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        dot += probs[k] * dprobs[k];
    }
    std::vector<double> dlogits(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) {
        dlogits[k] = probs[k] * (dprobs[k] - dot);
    }
    return dlogits;
}

Gradients backward(const ModelParams& params, LossTrace trace)
{
    Gradients grads = zeros_like(params);
    const std::size_t classes = params.num_classes();
    const std::size_t dim = params.feature_dim();

    for (const auto& call : trace.transition_calls) {
        if (call.dprobs.empty()) {
            continue;
        }
        if (call.trace.inputs.empty()) {
            throw std::invalid_argument("backward: transition call without a forward trace");
        }
        const auto dlogits = softmax_backward(call.probs, call.dprobs);
        const auto dinput = params.transition.backward(call.trace, dlogits, grads.transition);
        if (call.source >= 0) {
            if (static_cast<std::size_t>(call.source) >= trace.classifier_calls.size()) {
                throw std::invalid_argument("backward: transition call refers to a missing classifier call");
            }
            auto& upstream = trace.classifier_calls[static_cast<std::size_t>(call.source)];
            if (upstream.dprobs.empty()) {
                upstream.dprobs.assign(classes, 0.0);
            }
            for (std::size_t k = 0; k < classes; ++k) {
                upstream.dprobs[k] += dinput[dim + k];
            }
        }
    }
    for (const auto& call : trace.classifier_calls) {
        if (call.dprobs.empty()) {
            continue;
        }
        if (call.trace.inputs.empty()) {
            throw std::invalid_argument("backward: classifier call without a forward trace");
        }
        const auto dlogits = softmax_backward(call.probs, call.dprobs);
        params.classifier.backward(call.trace, dlogits, grads.classifier);
    }
    return grads;
}

void sgd_step(ModelParams& params, const Gradients& grads, double lr, double weight_decay)
{
    if (lr < 0.0 || weight_decay < 0.0) {
        throw std::invalid_argument("sgd_step: lr and weight_decay must be nonnegative");
    }
    if (!all_finite(grads)) {
        throw NumericalError("sgd_step: non-finite gradient");
    }
    for_each_parameter(params, grads, [&](double& p, double g) { p -= lr * (g + weight_decay * p); });
}

std::size_t parameter_count(const ModelParams& params)
{
    std::size_t n = 0;
    for (const Mlp* net : {&params.classifier, &params.transition}) {
        for (const auto& layer : net->layers()) {
            n += layer.weight.values.size() + layer.bias.size();
        }
    }
    return n;
}

bool all_finite(const ModelParams& params)
{
    for (const Mlp* net : {&params.classifier, &params.transition}) {
        for (const auto& layer : net->layers()) {
            for (double v : layer.weight.values) {
                if (!std::isfinite(v)) return false;
            }
            for (double v : layer.bias) {
                if (!std::isfinite(v)) return false;
            }
        }
    }
    return true;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write checkpoint " + path.string());
    }
    char buf[32];
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    for (const Mlp* net : {&params.classifier, &params.transition}) {
        out << net->layers().size() << '\n';
        for (const auto& layer : net->layers()) {
            out << layer.weight.rows << ' ' << layer.weight.cols << '\n';
            for (double v : layer.weight.values) {
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                out << buf << '\n';
            }
            for (double v : layer.bias) {
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                out << buf << '\n';
            }
        }
    }
    if (!out) {
        throw std::runtime_error("write failed for checkpoint " + path.string());
    }
}

ModelParams load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read checkpoint " + path.string());
    }
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != kCheckpointMagic || version != kCheckpointVersion) {
        throw std::runtime_error(path.string() + ": not a version " + std::to_string(kCheckpointVersion) +
                                 " checkpoint");
    }
    auto read_net = [&]() {
        std::size_t count = 0;
        if (!(in >> count) || count == 0) {
            throw std::runtime_error(path.string() + ": bad layer count");
        }
        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l < count; ++l) {
            std::size_t rows = 0;
            std::size_t cols = 0;
            if (!(in >> rows >> cols)) {
                throw std::runtime_error(path.string() + ": bad layer shape");
            }
            DenseLayer layer{Matrix(rows, cols), std::vector<double>(rows)};
            for (double& v : layer.weight.values) {
                if (!(in >> v)) throw std::runtime_error(path.string() + ": truncated weights");
            }
            for (double& v : layer.bias) {
                if (!(in >> v)) throw std::runtime_error(path.string() + ": truncated biases");
            }
            layers.push_back(std::move(layer));
        }
        return Mlp(std::move(layers));
    };
    ModelParams params;
    params.classifier = read_net();
    params.transition = read_net();
    if (params.transition.inputs() != params.classifier.inputs() + params.classifier.outputs() ||
        params.transition.outputs() != params.classifier.outputs()) {
        throw std::runtime_error(path.string() + ": classifier and transition shapes disagree");
    }
    return params;
}

} // namespace plslab
