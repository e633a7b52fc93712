#include "vida/vida_adapter.hpp"

#include <algorithm>
#include <cmath>

#include "vida/errors.hpp"

namespace vida {
namespace {

void require_scales(std::span<const ScalePair> scales, std::size_t rows) {
    if (scales.size() != 1 && scales.size() != rows) {
        throw ShapeError("expected 1 or " + std::to_string(rows) + " scale pairs, got " +
                         std::to_string(scales.size()));
    }
}

const ScalePair& scale_at(std::span<const ScalePair> scales, std::size_t row) {
    return scales.size() == 1 ? scales[0] : scales[row];
}

void fill_gaussian(Tensor2D& t, double sigma, Rng& rng) {
    std::normal_distribution<double> dist(0.0, sigma);
    for (double& v : t.values()) v = dist(rng);
}

}  // namespace

ViDAPair::ViDAPair(std::size_t d_in, std::size_t d_out, std::size_t low_rank, std::size_t high_rank)
    : low_down(low_rank, d_in), low_up(d_out, low_rank), high_up(high_rank, d_in), high_down(d_out, high_rank),
      low_down_grad(low_rank, d_in), low_up_grad(d_out, low_rank), high_up_grad(high_rank, d_in),
      high_down_grad(d_out, high_rank) {}

std::size_t ViDAPair::parameter_count() const {
    return low_down.size() + low_up.size() + high_up.size() + high_down.size();
}

void ViDAPair::zero_grad() {
    low_down_grad.fill(0.0);
    low_up_grad.fill(0.0);
    high_up_grad.fill(0.0);
    high_down_grad.fill(0.0);
}

void ViDAPair::validate() const {
    const bool ok = low_up.cols() == low_down.rows() && high_down.cols() == high_up.rows() &&
                    high_up.cols() == low_down.cols() && high_down.rows() == low_up.rows();
    if (!ok) {
        throw ShapeError("inconsistent adapter shapes: low_down " + low_down.shape_string() + ", low_up " +
                         low_up.shape_string() + ", high_up " + high_up.shape_string() + ", high_down " +
                         high_down.shape_string());
    }
}

BranchFeatures vida_branch_forward(const ViDAPair& vida, const Tensor2D& f) {
    if (f.cols() != vida.in_features()) {
        throw ShapeError("vida_branch_forward: input " + f.shape_string() + " vs adapter width " +
                         std::to_string(vida.in_features()));
    }
    return {matmul_nt(matmul_nt(f, vida.high_up), vida.high_down),
            matmul_nt(matmul_nt(f, vida.low_down), vida.low_up)};
}

AdaptedLayer::AdaptedLayer(LinearLayer base, ViDAPair vida) : base_(std::move(base)), vida_(std::move(vida)) {
    vida_.validate();
    if (vida_.in_features() != base_.in_features() || vida_.out_features() != base_.out_features()) {
        throw ShapeError("adapter " + std::to_string(vida_.in_features()) + "->" +
                         std::to_string(vida_.out_features()) + " does not match base layer " +
                         base_.weight.shape_string());
    }
    base_.trainable = false;
}

Tensor2D AdaptedLayer::compute(const Tensor2D& x, std::span<const ScalePair> scales, Cache* cache) const {
    if (x.cols() != base_.in_features()) {
        throw ShapeError("adapted layer input " + x.shape_string() + " vs weight " + base_.weight.shape_string());
    }
    require_scales(scales, x.rows());
    Tensor2D out = linear_forward(base_, x);
    Tensor2D hidden_high = matmul_nt(x, vida_.high_up);
    Tensor2D hidden_low = matmul_nt(x, vida_.low_down);
    const Tensor2D f_high = matmul_nt(hidden_high, vida_.high_down);
    const Tensor2D f_low = matmul_nt(hidden_low, vida_.low_up);
    for (std::size_t b = 0; b < out.rows(); ++b) {
        const ScalePair& s = scale_at(scales, b);
        auto o = out.row(b);
        auto h = f_high.row(b);
        auto l = f_low.row(b);
        for (std::size_t j = 0; j < o.size(); ++j) o[j] += s.high * h[j] + s.low * l[j];
    }
    if (cache) {
        cache->input = x;
        cache->hidden_high = std::move(hidden_high);
        cache->hidden_low = std::move(hidden_low);
        cache->scales.assign(scales.begin(), scales.end());
    }
    return out;
}

Tensor2D AdaptedLayer::forward(const Tensor2D& x, std::span<const ScalePair> scales) {
    Cache cache;
    Tensor2D out = compute(x, scales, &cache);
    cache_ = std::move(cache);
    return out;
}

Tensor2D AdaptedLayer::evaluate(const Tensor2D& x, std::span<const ScalePair> scales) const {
    return compute(x, scales, nullptr);
}

void AdaptedLayer::clear_cache() { cache_.reset(); }

Tensor2D AdaptedLayer::backward(const Tensor2D& grad_out) {
    if (!cache_) throw StateError("adapted layer backward called before forward");
    const Cache& c = *cache_;
    if (grad_out.rows() != c.input.rows() || grad_out.cols() != base_.out_features()) {
        throw ShapeError("adapted layer backward: grad " + grad_out.shape_string() + " vs cached input " +
                         c.input.shape_string());
    }
    Tensor2D grad_high = grad_out;
    Tensor2D grad_low = grad_out;
    for (std::size_t b = 0; b < grad_out.rows(); ++b) {
        const ScalePair& s = scale_at(c.scales, b);
        for (double& v : grad_high.row(b)) v *= s.high;
        for (double& v : grad_low.row(b)) v *= s.low;
    }
    accumulate_tn(grad_high, c.hidden_high, vida_.high_down_grad);
    accumulate_tn(grad_low, c.hidden_low, vida_.low_up_grad);
    const Tensor2D grad_hidden_high = matmul_nn(grad_high, vida_.high_down);
    const Tensor2D grad_hidden_low = matmul_nn(grad_low, vida_.low_up);
    accumulate_tn(grad_hidden_high, c.input, vida_.high_up_grad);
    accumulate_tn(grad_hidden_low, c.input, vida_.low_down_grad);

    Tensor2D grad_in = matmul_nn(grad_out, base_.weight);
    add_scaled(grad_in, 1.0, matmul_nn(grad_hidden_high, vida_.high_up));
    add_scaled(grad_in, 1.0, matmul_nn(grad_hidden_low, vida_.low_down));
    return grad_in;
}

Tensor2D adapted_forward(AdaptedLayer& layer, ScalePair scales, const Tensor2D& x) {
    return layer.forward(x, std::span<const ScalePair>(&scales, 1));
}

Tensor2D adapted_backward(AdaptedLayer& layer, const Tensor2D& grad_out) { return layer.backward(grad_out); }

LinearLayer reparameterize_fold(const AdaptedLayer& layer, ScalePair scales) {
    const ViDAPair& v = layer.vida();
    Tensor2D weight = layer.base().weight;
    if (v.high_rank() > 0) add_scaled(weight, scales.high, matmul(v.high_down, v.high_up));
    if (v.low_rank() > 0) add_scaled(weight, scales.low, matmul(v.low_up, v.low_down));
    return LinearLayer(std::move(weight), layer.base().bias);
}

AdaptedModel::AdaptedModel(std::vector<AdaptedLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ParameterError("adapted model needs at least one layer");
    for (std::size_t i = 1; i < layers_.size(); ++i) {
        if (layers_[i].base().in_features() != layers_[i - 1].base().out_features()) {
            throw ShapeError("adapted layer " + std::to_string(i) + " does not chain with its predecessor");
        }
    }
}

Tensor2D AdaptedModel::forward(const Tensor2D& x, std::span<const ScalePair> scales, const DropoutSpec* dropout) {
    const bool drop = dropout && dropout->rate > 0.0;
    if (dropout && !(dropout->rate >= 0.0 && dropout->rate < 1.0)) {
        throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(dropout->rate));
    }
    if (drop && !dropout->rng) throw ParameterError("dropout requires a generator");
    pre_activations_.assign(layers_.size(), Tensor2D{});
    dropout_masks_.assign(layers_.size(), Tensor2D{});
    cached_ = false;

    Tensor2D h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Tensor2D pre = layers_[i].forward(h, scales);
        if (i + 1 == layers_.size()) {
            h = std::move(pre);
            break;
        }
        h = relu(pre);
        pre_activations_[i] = std::move(pre);
        if (drop) {
            Tensor2D mask(h.rows(), h.cols());
            std::bernoulli_distribution keep(1.0 - dropout->rate);
            const double scale = 1.0 / (1.0 - dropout->rate);
            for (double& m : mask.values()) m = keep(*dropout->rng) ? scale : 0.0;
            auto hv = h.values();
            auto mv = mask.values();
            for (std::size_t k = 0; k < hv.size(); ++k) hv[k] *= mv[k];
            dropout_masks_[i] = std::move(mask);
        }
        if (i + 2 == layers_.size()) features_ = h;
    }
    if (layers_.size() == 1) features_ = x;
    cached_ = true;
    return h;
}

Tensor2D AdaptedModel::evaluate(const Tensor2D& x, std::span<const ScalePair> scales) const {
    Tensor2D h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].evaluate(h, scales);
        if (i + 1 != layers_.size()) h = relu(h);
    }
    return h;
}

Tensor2D AdaptedModel::backward(const Tensor2D& grad_logits) {
    if (!cached_) throw StateError("adapted model backward called before forward");
    Tensor2D g = grad_logits;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        if (i + 1 != layers_.size()) {
            if (!dropout_masks_[i].empty()) {
                auto gv = g.values();
                auto mv = dropout_masks_[i].values();
                for (std::size_t k = 0; k < gv.size(); ++k) gv[k] *= mv[k];
            }
            g = relu_backward(pre_activations_[i], g);
        }
        g = layers_[i].backward(g);
    }
    return g;
}

std::vector<ParamRef> AdaptedModel::adapter_parameters() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        ViDAPair& v = layers_[i].vida();
        const std::string prefix = "layers." + std::to_string(i) + ".";
        out.push_back({prefix + "low_down", v.low_down.values(), v.low_down_grad.values()});
        out.push_back({prefix + "low_up", v.low_up.values(), v.low_up_grad.values()});
        out.push_back({prefix + "high_up", v.high_up.values(), v.high_up_grad.values()});
        out.push_back({prefix + "high_down", v.high_down.values(), v.high_down_grad.values()});
    }
    return out;
}

void AdaptedModel::zero_grad() {
    for (auto& l : layers_) l.vida().zero_grad();
}

std::size_t AdaptedModel::adapter_parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.vida().parameter_count();
    return n;
}

MlpModel AdaptedModel::base_model() const {
    MlpModel m;
    for (const auto& l : layers_) {
        LinearLayer base(l.base().weight, l.base().bias);
        m.layers.push_back(std::move(base));
    }
    return m;
}

MlpModel AdaptedModel::fold(ScalePair scales) const {
    MlpModel m;
    for (const auto& l : layers_) m.layers.push_back(reparameterize_fold(l, scales));
    return m;
}

AdaptedModel attach_adapters(const MlpModel& model, const AdapterOptions& options, Rng& rng) {
    model.validate();
    if (options.init == AdapterInit::gaussian && !(options.sigma > 0.0)) {
        throw ParameterError("gaussian adapter init needs sigma > 0");
    }
    std::vector<AdaptedLayer> layers;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LinearLayer& base = model.layers[i];
        const std::size_t d_in = base.in_features();
        const std::size_t d_out = base.out_features();
        if (options.enforce_rank_rules) {
            const std::size_t narrow = std::min(d_in, d_out);
            const std::size_t wide = std::max(d_in, d_out);
            if (options.low_rank == 0 && options.high_rank == 0) {
                throw ParameterError("at least one adapter branch must be present");
            }
            if (options.low_rank > 0 && options.low_rank >= narrow) {
                throw ParameterError("low rank d_l=" + std::to_string(options.low_rank) +
                                     " must be below the layer width " + std::to_string(narrow) + " (layer " +
                                     std::to_string(i) + ")");
            }
            if (options.high_rank > 0 && options.high_rank < wide) {
                throw ParameterError("high rank d_h=" + std::to_string(options.high_rank) +
                                     " must be at least the layer width " + std::to_string(wide) + " (layer " +
                                     std::to_string(i) + ")");
            }
        }
        ViDAPair v(d_in, d_out, options.low_rank, options.high_rank);
        if (options.init == AdapterInit::gaussian) {
            fill_gaussian(v.low_down, options.sigma, rng);
            fill_gaussian(v.low_up, options.sigma, rng);
            fill_gaussian(v.high_up, options.sigma, rng);
            fill_gaussian(v.high_down, options.sigma, rng);
        } else {
            // Second projections stay zero so the adapted model starts equal to the source.
            const double sigma = 1.0 / std::sqrt(static_cast<double>(d_in));
            fill_gaussian(v.low_down, sigma, rng);
            fill_gaussian(v.high_up, sigma, rng);
        }
        layers.emplace_back(LinearLayer(base.weight, base.bias), std::move(v));
    }
    return AdaptedModel(std::move(layers));
}

AdaptedModel attach_adapters(const MlpModel& model, std::size_t low_rank, std::size_t high_rank,
                             AdapterInit init, double sigma, Rng& rng) {
    if (low_rank < 1) throw ParameterError("low rank d_l must be at least 1");
    if (high_rank < 1) throw ParameterError("high rank d_h must be at least 1");
    AdapterOptions options;
    options.low_rank = low_rank;
    options.high_rank = high_rank;
    options.init = init;
    options.sigma = sigma;
    return attach_adapters(model, options, rng);
}

}  // namespace vida
