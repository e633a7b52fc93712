#include "vida/shift_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vida/errors.hpp"
#include "vida/kernels.hpp"

namespace vida {

FeatureHistogram histogram_features(std::span<const double> values, std::size_t bins, double lo, double hi) {
    if (bins == 0) throw ParameterError("histogram needs at least one bin");
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw ParameterError("histogram range must satisfy lo < hi, got [" + std::to_string(lo) + ", " +
                             std::to_string(hi) + "]");
    }
    FeatureHistogram h;
    h.bin_edges.resize(bins + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i <= bins; ++i) h.bin_edges[i] = lo + width * static_cast<double>(i);
    h.bin_edges.back() = hi;
    h.counts.assign(bins, 0);
    for (double v : values) {
        const double pos = (v - lo) / width;
        std::size_t idx = 0;
        if (pos >= static_cast<double>(bins)) {
            idx = bins - 1;
        } else if (pos > 0.0) {
            idx = static_cast<std::size_t>(pos);
        }
        ++h.counts[idx];
    }
    h.sample_count = values.size();
    h.probs.resize(bins);
    const double total = static_cast<double>(values.size()) + kHistogramSmoothing * static_cast<double>(bins);
    for (std::size_t i = 0; i < bins; ++i) {
        h.probs[i] = (static_cast<double>(h.counts[i]) + kHistogramSmoothing) / total;
    }
    return h;
}

FeatureHistogram histogram_features(const Tensor2D& features, std::size_t bins, double lo, double hi) {
    return histogram_features(features.values(), bins, lo, hi);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) {
        throw ShapeError("kl_divergence: lengths " + std::to_string(p.size()) + " and " + std::to_string(q.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) acc += p[i] * std::log(p[i] / q[i]);
    }
    return acc;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) {
        throw ShapeError("js_divergence: lengths " + std::to_string(p.size()) + " and " + std::to_string(q.size()));
    }
    // Summed term by term in a fixed order so that swapping P and Q gives the
    // same floating-point result.
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        const double tp = p[i] > 0.0 ? p[i] * std::log(p[i] / m) : 0.0;
        const double tq = q[i] > 0.0 ? q[i] * std::log(q[i] / m) : 0.0;
        acc += 0.5 * (tp + tq);
    }
    return acc;
}

namespace {

std::pair<double, double> joint_range(std::span<const double> a, std::span<const double> b) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : a) lo = std::min(lo, v), hi = std::max(hi, v);
    for (double v : b) lo = std::min(lo, v), hi = std::max(hi, v);
    if (!(hi > lo)) {
        // Degenerate (constant or empty) data: any non-empty window puts all mass in one bin.
        const double c = std::isfinite(lo) ? lo : 0.0;
        return {c - 0.5, c + 0.5};
    }
    return {lo, hi};
}

}  // namespace

double feature_js(const Tensor2D& a, const Tensor2D& b, std::size_t bins) {
    const auto [lo, hi] = joint_range(a.values(), b.values());
    return js_divergence(histogram_features(a.values(), bins, lo, hi).probs,
                         histogram_features(b.values(), bins, lo, hi).probs);
}

double feature_js_per_dimension(const Tensor2D& a, const Tensor2D& b, std::size_t bins) {
    if (a.cols() != b.cols()) throw ShapeError("feature_js_per_dimension: feature widths differ");
    if (a.cols() == 0) return 0.0;
    double acc = 0.0;
    std::vector<double> ca(a.rows()), cb(b.rows());
    for (std::size_t d = 0; d < a.cols(); ++d) {
        for (std::size_t r = 0; r < a.rows(); ++r) ca[r] = a(r, d);
        for (std::size_t r = 0; r < b.rows(); ++r) cb[r] = b(r, d);
        const auto [lo, hi] = joint_range(ca, cb);
        acc += js_divergence(histogram_features(ca, bins, lo, hi).probs, histogram_features(cb, bins, lo, hi).probs);
    }
    return acc / static_cast<double>(a.cols());
}

Normalizer parse_normalizer(std::string_view s) {
    if (s == "minmax" || s == "minmax_over_classes") return Normalizer::minmax_over_classes;
    if (s == "max" || s == "divide_by_max") return Normalizer::divide_by_max;
    throw ParameterError("unknown normalizer '" + std::string(s) + "'");
}

ClassCentroid class_centroid(std::size_t class_id, const Tensor2D& members) {
    if (members.rows() == 0) throw ParameterError("class " + std::to_string(class_id) + " has no members");
    ClassCentroid c;
    c.class_id = class_id;
    c.member_count = members.rows();
    c.centroid.assign(members.cols(), 0.0);
    for (std::size_t r = 0; r < members.rows(); ++r) kernels::axpy(1.0, members.row(r), c.centroid);
    for (double& v : c.centroid) v /= static_cast<double>(members.rows());
    return c;
}

double raw_intra_class_divergence(const Tensor2D& members) {
    const ClassCentroid c = class_centroid(0, members);
    double acc = 0.0;
    for (std::size_t r = 0; r < members.rows(); ++r) acc += kernels::squared_distance(members.row(r), c.centroid);
    return acc / static_cast<double>(members.rows());
}

std::vector<double> intra_class_divergence(std::span<const Tensor2D> classes, Normalizer phi) {
    std::vector<double> raw;
    raw.reserve(classes.size());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i].rows() == 0) throw ParameterError("class " + std::to_string(i) + " has no members");
        raw.push_back(raw_intra_class_divergence(classes[i]));
    }
    if (raw.empty()) return raw;
    const auto [mn, mx] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *mn;
    const double hi = *mx;
    std::vector<double> out(raw.size(), 0.0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (phi == Normalizer::minmax_over_classes) {
            out[i] = hi > lo ? (raw[i] - lo) / (hi - lo) : 0.0;
        } else {
            out[i] = hi > 0.0 ? raw[i] / hi : 0.0;
        }
    }
    return out;
}

std::vector<Tensor2D> split_by_class(const Tensor2D& features, std::span<const std::size_t> labels,
                                     std::size_t class_count) {
    if (labels.size() != features.rows()) throw ShapeError("split_by_class: label count mismatch");
    std::vector<std::vector<double>> buckets(class_count);
    std::vector<std::size_t> counts(class_count, 0);
    for (std::size_t r = 0; r < features.rows(); ++r) {
        if (labels[r] >= class_count) throw ShapeError("split_by_class: label out of range");
        auto row = features.row(r);
        buckets[labels[r]].insert(buckets[labels[r]].end(), row.begin(), row.end());
        ++counts[labels[r]];
    }
    std::vector<Tensor2D> out;
    for (std::size_t c = 0; c < class_count; ++c) {
        if (counts[c] > 0) out.emplace_back(counts[c], features.cols(), std::move(buckets[c]));
    }
    return out;
}

double per_domain_error(const Tensor2D& predictions, std::span<const std::size_t> labels) {
    if (labels.size() != predictions.rows()) {
        throw ShapeError("per_domain_error: " + std::to_string(predictions.rows()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) return 0.0;
    std::size_t wrong = 0;
    for (std::size_t r = 0; r < predictions.rows(); ++r) {
        if (argmax(predictions.row(r)) != labels[r]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

}  // namespace vida
