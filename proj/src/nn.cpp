#include "vida/nn.hpp"

#include <algorithm>
#include <cmath>

#include "vida/errors.hpp"
#include "vida/kernels.hpp"

namespace vida {

LinearLayer::LinearLayer(std::size_t d_in, std::size_t d_out)
    : weight(d_out, d_in), bias(d_out, 0.0), weight_grad(d_out, d_in), bias_grad(d_out, 0.0) {}

LinearLayer::LinearLayer(Tensor2D w, std::vector<double> b)
    : weight(std::move(w)), bias(std::move(b)), weight_grad(weight.rows(), weight.cols()),
      bias_grad(bias.size(), 0.0) {
    if (bias.size() != weight.rows()) {
        throw ShapeError("bias length " + std::to_string(bias.size()) + " does not match weight " +
                         weight.shape_string());
    }
}

void LinearLayer::zero_grad() {
    weight_grad.fill(0.0);
    std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
}

Tensor2D linear_forward(const LinearLayer& layer, const Tensor2D& x) {
    if (x.cols() != layer.in_features()) {
        throw ShapeError("linear_forward: input " + x.shape_string() + " vs weight " +
                         layer.weight.shape_string());
    }
    Tensor2D out = matmul_nt(x, layer.weight);
    for (std::size_t b = 0; b < out.rows(); ++b) {
        auto row = out.row(b);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
    }
    return out;
}

Tensor2D linear_backward(LinearLayer& layer, const Tensor2D& x, const Tensor2D& grad_out) {
    if (x.cols() != layer.in_features() || grad_out.cols() != layer.out_features() ||
        x.rows() != grad_out.rows()) {
        throw ShapeError("linear_backward: input " + x.shape_string() + ", grad " + grad_out.shape_string() +
                         ", weight " + layer.weight.shape_string());
    }
    accumulate_tn(grad_out, x, layer.weight_grad);
    for (std::size_t b = 0; b < grad_out.rows(); ++b) {
        kernels::axpy(1.0, grad_out.row(b), layer.bias_grad);
    }
    return matmul_nn(grad_out, layer.weight);
}

Tensor2D relu(const Tensor2D& x) {
    Tensor2D out = x;
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor2D relu_backward(const Tensor2D& pre_activation, const Tensor2D& grad) {
    require_same_shape(pre_activation, grad, "relu_backward");
    Tensor2D out = grad;
    auto pre = pre_activation.values();
    auto g = out.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!(pre[i] > 0.0)) g[i] = 0.0;
    }
    return out;
}

Tensor2D softmax(const Tensor2D& logits) {
    Tensor2D out(logits.rows(), logits.cols());
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        auto in = logits.row(b);
        auto o = out.row(b);
        const double m = *std::max_element(in.begin(), in.end());
        double z = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(in[c] - m);
            z += o[c];
        }
        for (double& v : o) v /= z;
    }
    return out;
}

double soft_cross_entropy(const Tensor2D& target, const Tensor2D& pred) {
    require_same_shape(target, pred, "soft_cross_entropy");
    if (pred.rows() == 0) return 0.0;
    const double classes = static_cast<double>(pred.cols());
    double total = 0.0;
    for (std::size_t b = 0; b < pred.rows(); ++b) {
        auto t = target.row(b);
        auto p = pred.row(b);
        double row = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) {
            if (t[c] != 0.0) row -= t[c] * std::log(std::max(p[c], kLogClamp));
        }
        total += row / classes;
    }
    return total / static_cast<double>(pred.rows());
}

Tensor2D soft_cross_entropy_logit_grad(const Tensor2D& target, const Tensor2D& pred) {
    require_same_shape(target, pred, "soft_cross_entropy_logit_grad");
    const double scale = 1.0 / (static_cast<double>(pred.rows()) * static_cast<double>(pred.cols()));
    Tensor2D grad(pred.rows(), pred.cols());
    for (std::size_t b = 0; b < pred.rows(); ++b) {
        auto t = target.row(b);
        auto p = pred.row(b);
        double mass = 0.0;
        for (double v : t) mass += v;
        auto g = grad.row(b);
        for (std::size_t c = 0; c < p.size(); ++c) g[c] = scale * (p[c] * mass - t[c]);
    }
    return grad;
}

double hard_cross_entropy(const Tensor2D& probs, std::span<const std::size_t> labels) {
    if (labels.size() != probs.rows()) throw ShapeError("hard_cross_entropy: label count mismatch");
    double total = 0.0;
    for (std::size_t b = 0; b < probs.rows(); ++b) {
        if (labels[b] >= probs.cols()) throw ShapeError("hard_cross_entropy: label out of range");
        total -= std::log(std::max(probs(b, labels[b]), kLogClamp));
    }
    return probs.rows() == 0 ? 0.0 : total / static_cast<double>(probs.rows());
}

Tensor2D hard_cross_entropy_logit_grad(const Tensor2D& probs, std::span<const std::size_t> labels) {
    if (labels.size() != probs.rows()) throw ShapeError("hard_cross_entropy_logit_grad: label count mismatch");
    Tensor2D grad = probs;
    const double scale = 1.0 / static_cast<double>(probs.rows());
    for (std::size_t b = 0; b < probs.rows(); ++b) {
        grad(b, labels[b]) -= 1.0;
        for (double& v : grad.row(b)) v *= scale;
    }
    return grad;
}

Tensor2D dropout_forward(const Tensor2D& x, double rate, Rng& rng, bool active) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!active || rate == 0.0) return x;
    Tensor2D out = x;
    std::bernoulli_distribution keep(1.0 - rate);
    const double scale = 1.0 / (1.0 - rate);
    for (double& v : out.values()) v = keep(rng) ? v * scale : 0.0;
    return out;
}

void adam_step(AdamState& state, std::span<const ParamRef> params) {
    if (state.first_moment.empty() && state.step_count == 0) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.value.size(), 0.0);
            state.second_moment.emplace_back(p.value.size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_step: optimizer tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].value.size() != state.first_moment[i].size() ||
            params[i].grad.size() != params[i].value.size()) {
            throw ShapeError("adam_step: buffer size mismatch for '" + params[i].name + "'");
        }
    }
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const kernels::AdamCoefficients c{state.lr, state.beta1, state.beta2, state.eps,
                                      1.0 - std::pow(state.beta1, t), 1.0 - std::pow(state.beta2, t)};
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < params.size(); ++i) {
        k.adam(c, params[i].value.data(), params[i].grad.data(), state.first_moment[i].data(),
               state.second_moment[i].data(), params[i].value.size());
    }
}

std::vector<std::size_t> MlpModel::widths() const {
    std::vector<std::size_t> w;
    if (layers.empty()) return w;
    w.push_back(layers.front().in_features());
    for (const auto& l : layers) w.push_back(l.out_features());
    return w;
}

void MlpModel::validate() const {
    if (layers.empty()) throw ParameterError("model has no layers");
    for (std::size_t i = 1; i < layers.size(); ++i) {
        if (layers[i].in_features() != layers[i - 1].out_features()) {
            throw ShapeError("layer " + std::to_string(i) + " input width does not chain with layer " +
                             std::to_string(i - 1));
        }
    }
}

MlpModel make_mlp(std::span<const std::size_t> widths, Rng& rng) {
    if (widths.size() < 2) throw ParameterError("an MLP needs at least input and output widths");
    MlpModel model;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        if (widths[i] == 0 || widths[i + 1] == 0) throw ParameterError("layer widths must be positive");
        LinearLayer layer(widths[i], widths[i + 1]);
        // He initialisation for ReLU networks.
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(widths[i])));
        for (double& w : layer.weight.values()) w = dist(rng);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

Tensor2D mlp_logits(const MlpModel& model, const Tensor2D& x, MlpTrace* trace) {
    if (trace) {
        trace->inputs.clear();
        trace->pre_activations.clear();
    }
    Tensor2D h = x;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        Tensor2D pre = linear_forward(model.layers[i], h);
        const bool last = i + 1 == model.layers.size();
        Tensor2D next = last ? pre : relu(pre);
        if (trace) {
            trace->inputs.push_back(std::move(h));
            trace->pre_activations.push_back(std::move(pre));
        }
        h = std::move(next);
    }
    return h;
}

Tensor2D mlp_features(const MlpModel& model, const Tensor2D& x) {
    Tensor2D h = x;
    for (std::size_t i = 0; i + 1 < model.layers.size(); ++i) h = relu(linear_forward(model.layers[i], h));
    return h;
}

void mlp_backward(MlpModel& model, const MlpTrace& trace, const Tensor2D& grad_logits) {
    if (trace.inputs.size() != model.layers.size()) throw StateError("mlp_backward called without a forward trace");
    Tensor2D g = grad_logits;
    for (std::size_t i = model.layers.size(); i-- > 0;) {
        if (i + 1 != model.layers.size()) g = relu_backward(trace.pre_activations[i], g);
        g = linear_backward(model.layers[i], trace.inputs[i], g);
    }
}

void mlp_zero_grad(MlpModel& model) {
    for (auto& l : model.layers) l.zero_grad();
}

std::vector<ParamRef> mlp_parameters(MlpModel& model) {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        auto& l = model.layers[i];
        const std::string prefix = "layers." + std::to_string(i) + ".";
        out.push_back({prefix + "weight", l.weight.values(), l.weight_grad.values()});
        out.push_back({prefix + "bias", l.bias, l.bias_grad});
    }
    return out;
}

}  // namespace vida
