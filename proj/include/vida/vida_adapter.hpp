#pragma once
// Dual-rank visual domain adapters attached in parallel to a frozen linear layer.
//
//   f_o = W x + b                       (frozen base)
//   f_h = high_down * (high_up * x)     (rank d_h >= d, domain-specific)
//   f_l = low_up * (low_down * x)       (rank d_l <  d, domain-shared)
//   out = f_o + lambda_h * f_h + lambda_l * f_l
//
// Neither branch has a bias or a nonlinearity, so the whole layer folds back
// into a single linear map once the scale factors are fixed.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "vida/nn.hpp"
#include "vida/rng.hpp"
#include "vida/tensor.hpp"

namespace vida {

// Fusion weights for the high- and low-rank branches of one sample.
struct ScalePair {
    double high = 1.0;
    double low = 1.0;

    friend bool operator==(const ScalePair&, const ScalePair&) = default;
};

struct ViDAPair {
    // Down projections read from the layer input (d_in), up projections write to
    // the layer output (d_out). For square layers d_in == d_out == d.
    Tensor2D low_down;   // d_l x d_in
    Tensor2D low_up;     // d_out x d_l
    Tensor2D high_up;    // d_h x d_in
    Tensor2D high_down;  // d_out x d_h

    Tensor2D low_down_grad;
    Tensor2D low_up_grad;
    Tensor2D high_up_grad;
    Tensor2D high_down_grad;

    ViDAPair() = default;
    // All-zero adapter. A rank of 0 means the branch is absent.
    ViDAPair(std::size_t d_in, std::size_t d_out, std::size_t low_rank, std::size_t high_rank);

    std::size_t in_features() const { return low_down.cols(); }
    std::size_t out_features() const { return low_up.rows(); }
    std::size_t low_rank() const { return low_down.rows(); }
    std::size_t high_rank() const { return high_up.rows(); }
    std::size_t parameter_count() const;

    void zero_grad();
    // Throws ShapeError if the four matrices do not describe one consistent adapter.
    void validate() const;
};

struct BranchFeatures {
    Tensor2D high;
    Tensor2D low;
};

BranchFeatures vida_branch_forward(const ViDAPair& vida, const Tensor2D& f);

class AdaptedLayer {
public:
    AdaptedLayer() = default;
    AdaptedLayer(LinearLayer base, ViDAPair vida);

    // `scales` holds one pair per row of x, or a single pair broadcast to all rows.
    Tensor2D forward(const Tensor2D& x, std::span<const ScalePair> scales);
    // Gradient flows into the adapter matrices only; the base layer is never touched.
    // Throws StateError when no forward pass is cached.
    Tensor2D backward(const Tensor2D& grad_out);

    // Same arithmetic as forward() without caching anything.
    Tensor2D evaluate(const Tensor2D& x, std::span<const ScalePair> scales) const;

    const LinearLayer& base() const { return base_; }
    const ViDAPair& vida() const { return vida_; }
    ViDAPair& vida() { return vida_; }
    void clear_cache();

private:
    struct Cache {
        Tensor2D input;
        Tensor2D hidden_high;
        Tensor2D hidden_low;
        std::vector<ScalePair> scales;
    };

    Tensor2D compute(const Tensor2D& x, std::span<const ScalePair> scales, Cache* cache) const;

    LinearLayer base_;
    ViDAPair vida_;
    std::optional<Cache> cache_;
};

Tensor2D adapted_forward(AdaptedLayer& layer, ScalePair scales, const Tensor2D& x);
Tensor2D adapted_backward(AdaptedLayer& layer, const Tensor2D& grad_out);

// W_eff = W + lambda_h * high_down * high_up + lambda_l * low_up * low_down; bias unchanged.
LinearLayer reparameterize_fold(const AdaptedLayer& layer, ScalePair scales);

enum class AdapterInit { zero_out_proj, gaussian };

struct AdapterOptions {
    std::size_t low_rank = 1;
    std::size_t high_rank = 128;
    AdapterInit init = AdapterInit::zero_out_proj;
    double sigma = 0.01;  // gaussian init only
    // Checks 1 <= d_l < min(d_in, d_out) and d_h >= max(d_in, d_out) for every
    // present branch. Same-structure ablations turn it off.
    bool enforce_rank_rules = true;
};

struct DropoutSpec {
    double rate = 0.0;
    Rng* rng = nullptr;
};

// A ReLU MLP whose every linear layer carries a ViDAPair.
class AdaptedModel {
public:
    AdaptedModel() = default;
    explicit AdaptedModel(std::vector<AdaptedLayer> layers);

    // Dropout (when given) is applied to each hidden activation after ReLU.
    Tensor2D forward(const Tensor2D& x, std::span<const ScalePair> scales, const DropoutSpec* dropout = nullptr);
    Tensor2D backward(const Tensor2D& grad_logits);
    Tensor2D evaluate(const Tensor2D& x, std::span<const ScalePair> scales) const;

    // Last hidden activation of the most recent forward().
    const Tensor2D& features() const { return features_; }

    std::vector<ParamRef> adapter_parameters();
    void zero_grad();

    std::size_t layer_count() const { return layers_.size(); }
    const AdaptedLayer& layer(std::size_t i) const { return layers_[i]; }
    AdaptedLayer& layer(std::size_t i) { return layers_[i]; }
    std::size_t input_dim() const { return layers_.front().base().in_features(); }
    std::size_t class_count() const { return layers_.back().base().out_features(); }
    std::size_t adapter_parameter_count() const;

    MlpModel base_model() const;
    MlpModel fold(ScalePair scales) const;

private:
    std::vector<AdaptedLayer> layers_;
    std::vector<Tensor2D> pre_activations_;
    std::vector<Tensor2D> dropout_masks_;
    Tensor2D features_;
    bool cached_ = false;
};

AdaptedModel attach_adapters(const MlpModel& model, const AdapterOptions& options, Rng& rng);
AdaptedModel attach_adapters(const MlpModel& model, std::size_t low_rank, std::size_t high_rank,
                             AdapterInit init, double sigma, Rng& rng);

}  // namespace vida
