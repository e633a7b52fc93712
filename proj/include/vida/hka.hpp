#pragma once
// Homeostatic knowledge allotment: MC-dropout uncertainty per sample, then a
// piecewise rule that shifts fusion weight between the two adapter branches.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "vida/rng.hpp"
#include "vida/tensor.hpp"
#include "vida/vida_adapter.hpp"

namespace vida {

enum class HkaMode { normal, inverted, fixed };

HkaMode parse_hka_mode(std::string_view s);
std::string_view to_string(HkaMode m);

struct HkaConfig {
    std::size_t passes = 5;       // m
    double threshold = 0.2;       // Theta
    double dropout_rate = 0.1;
    HkaMode mode = HkaMode::normal;
    ScalePair fixed_scales{1.0, 1.0};

    // m >= 2, 0 < Theta < sqrt(2), 0 <= rate < 1.
    void validate() const;
};

struct UncertaintyRecord {
    double u = 0.0;
    std::vector<double> mean;  // mu, elementwise mean of the passes
};

// m row-stochastic prediction matrices, each from an independent dropout mask.
// The passes run with neutral scales (1, 1).
std::vector<Tensor2D> mc_dropout_predict(AdaptedModel& model, const Tensor2D& x, const HkaConfig& cfg, Rng& rng);

// `passes` is m x C: one probability vector per stochastic pass for a single sample.
// u = sqrt(mean_i ||p_i - mu||^2)
UncertaintyRecord sample_uncertainty(const Tensor2D& passes);

// Per-sample u across m batch predictions of identical shape.
std::vector<double> uncertainty(std::span<const Tensor2D> passes);

// u is clamped to [0, 1] first. At u == Theta the high-uncertainty branch applies.
ScalePair allot_scales(double u, const HkaConfig& cfg);

std::vector<ScalePair> allot_scales(std::span<const double> u, const HkaConfig& cfg);

}  // namespace vida
