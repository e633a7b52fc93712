#pragma once
// Distribution-shift diagnostics over model features: histogram estimates,
// KL / JS divergence between domains, and normalised intra-class divergence.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "vida/tensor.hpp"

namespace vida {

inline constexpr std::size_t kDefaultHistogramBins = 1000;
inline constexpr double kHistogramSmoothing = 1e-10;

struct FeatureHistogram {
    std::vector<double> bin_edges;  // n + 1, ascending
    std::vector<std::size_t> counts;
    std::vector<double> probs;      // smoothed and normalised
    std::size_t sample_count = 0;
};

// Equal-width bins over [lo, hi]; values outside clamp into the edge bins.
// Throws ParameterError for bins == 0 or hi <= lo.
FeatureHistogram histogram_features(std::span<const double> values, std::size_t bins, double lo, double hi);
FeatureHistogram histogram_features(const Tensor2D& features, std::size_t bins, double lo, double hi);

// sum P log(P / Q), natural log. Zero-probability terms of P contribute 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
// 0.5 KL(P || M) + 0.5 KL(Q || M), M = (P + Q) / 2.
double js_divergence(std::span<const double> p, std::span<const double> q);

// JS between the flattened feature distributions of two domains, binned over
// the union of their observed ranges.
double feature_js(const Tensor2D& a, const Tensor2D& b, std::size_t bins = kDefaultHistogramBins);
// Mean over feature columns of the per-dimension JS.
double feature_js_per_dimension(const Tensor2D& a, const Tensor2D& b, std::size_t bins = kDefaultHistogramBins);

enum class Normalizer { minmax_over_classes, divide_by_max };

Normalizer parse_normalizer(std::string_view s);

struct ClassCentroid {
    std::size_t class_id = 0;
    std::vector<double> centroid;
    std::size_t member_count = 0;
};

ClassCentroid class_centroid(std::size_t class_id, const Tensor2D& members);

// (1/|C|) sum ||e_i - mu||^2 for one class. Throws ParameterError on an empty class.
double raw_intra_class_divergence(const Tensor2D& members);

// Normalised E per class, in [0, 1].
std::vector<double> intra_class_divergence(std::span<const Tensor2D> classes, Normalizer phi);

// Groups rows of `features` by label (classes without members are skipped).
std::vector<Tensor2D> split_by_class(const Tensor2D& features, std::span<const std::size_t> labels,
                                     std::size_t class_count);

// Fraction of argmax mismatches.
double per_domain_error(const Tensor2D& predictions, std::span<const std::size_t> labels);

}  // namespace vida
