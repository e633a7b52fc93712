#pragma once
// Minimal dense network substrate with hand-written backward passes.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vida/rng.hpp"
#include "vida/tensor.hpp"

namespace vida {

// A named view over one parameter buffer and its gradient.
struct ParamRef {
    std::string name;
    std::span<double> value;
    std::span<double> grad;
};

struct LinearLayer {
    Tensor2D weight;            // d_out x d_in
    std::vector<double> bias;   // d_out
    Tensor2D weight_grad;
    std::vector<double> bias_grad;
    bool trainable = true;

    LinearLayer() = default;
    LinearLayer(std::size_t d_in, std::size_t d_out);
    LinearLayer(Tensor2D w, std::vector<double> b);

    std::size_t in_features() const { return weight.cols(); }
    std::size_t out_features() const { return weight.rows(); }
    void zero_grad();
};

Tensor2D linear_forward(const LinearLayer& layer, const Tensor2D& x);
// Accumulates weight/bias gradients and returns dL/dx.
Tensor2D linear_backward(LinearLayer& layer, const Tensor2D& x, const Tensor2D& grad_out);

Tensor2D relu(const Tensor2D& x);
// grad * 1[pre > 0]
Tensor2D relu_backward(const Tensor2D& pre_activation, const Tensor2D& grad);

// Row-wise, max-subtracted.
Tensor2D softmax(const Tensor2D& logits);

inline constexpr double kLogClamp = 1e-12;

// Mean over rows of -(1/C) * sum_c target(c) * log(max(pred(c), 1e-12)).
double soft_cross_entropy(const Tensor2D& target, const Tensor2D& pred);
// Gradient of soft_cross_entropy w.r.t. the logits that produced `pred` through softmax.
// The clamp is ignored here; it only binds for probabilities below 1e-12.
Tensor2D soft_cross_entropy_logit_grad(const Tensor2D& target, const Tensor2D& pred);

// Mean negative log-likelihood of hard labels, used for source training.
double hard_cross_entropy(const Tensor2D& probs, std::span<const std::size_t> labels);
Tensor2D hard_cross_entropy_logit_grad(const Tensor2D& probs, std::span<const std::size_t> labels);

// Inverted dropout. With active == false or rate == 0 returns x unchanged.
Tensor2D dropout_forward(const Tensor2D& x, double rate, Rng& rng, bool active);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step_count = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

// Bias-corrected Adam over every entry of `params`. Moment buffers are created on
// the first call and must keep matching shapes afterwards.
void adam_step(AdamState& state, std::span<const ParamRef> params);

// Plain ReLU perceptron: hidden layers use ReLU, the last layer emits logits.
struct MlpModel {
    std::vector<LinearLayer> layers;

    std::size_t input_dim() const { return layers.front().in_features(); }
    std::size_t class_count() const { return layers.back().out_features(); }
    std::vector<std::size_t> widths() const;
    void validate() const;
};

MlpModel make_mlp(std::span<const std::size_t> widths, Rng& rng);

// Activations kept for backward.
struct MlpTrace {
    std::vector<Tensor2D> inputs;           // input of each layer
    std::vector<Tensor2D> pre_activations;  // output of each linear map
};

Tensor2D mlp_logits(const MlpModel& model, const Tensor2D& x, MlpTrace* trace = nullptr);
// Last hidden activation (input of the classifier layer).
Tensor2D mlp_features(const MlpModel& model, const Tensor2D& x);
void mlp_backward(MlpModel& model, const MlpTrace& trace, const Tensor2D& grad_logits);
void mlp_zero_grad(MlpModel& model);
std::vector<ParamRef> mlp_parameters(MlpModel& model);

}  // namespace vida
