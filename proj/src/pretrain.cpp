#include "vida/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vida/errors.hpp"
#include "vida/shift_metrics.hpp"

namespace vida {

PretrainResult pretrain_source(MlpModel model, const LabeledBatch& data, const PretrainConfig& cfg, Rng& rng) {
    model.validate();
    if (data.inputs.rows() != data.labels.size()) throw ShapeError("pretrain: label count mismatch");
    if (cfg.batch_size == 0) throw ParameterError("pretrain batch size must be positive");
    PretrainResult result;
    AdamState opt;
    opt.lr = cfg.lr;
    const std::size_t n = data.inputs.rows();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            Tensor2D x(end - start, data.inputs.cols());
            std::vector<std::size_t> y(end - start);
            for (std::size_t i = start; i < end; ++i) {
                auto src = data.inputs.row(order[i]);
                std::copy(src.begin(), src.end(), x.row(i - start).begin());
                y[i - start] = data.labels[order[i]];
            }
            MlpTrace trace;
            const Tensor2D probs = softmax(mlp_logits(model, x, &trace));
            const double loss = hard_cross_entropy(probs, y);
            if (!std::isfinite(loss)) throw TrainingError("source training diverged (non-finite loss)");
            mlp_zero_grad(model);
            mlp_backward(model, trace, hard_cross_entropy_logit_grad(probs, y));
            const std::vector<ParamRef> params = mlp_parameters(model);
            adam_step(opt, params);
            epoch_loss += loss;
            ++batches;
        }
        result.epoch_loss.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
    }
    result.train_error = evaluate_error(model, data);
    result.model = std::move(model);
    return result;
}

double evaluate_error(const MlpModel& model, const LabeledBatch& data) {
    return per_domain_error(mlp_logits(model, data.inputs), data.labels);
}

}  // namespace vida
