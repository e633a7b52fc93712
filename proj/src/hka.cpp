#include "vida/hka.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vida/errors.hpp"

namespace vida {

HkaMode parse_hka_mode(std::string_view s) {
    if (s == "normal") return HkaMode::normal;
    if (s == "inverted") return HkaMode::inverted;
    if (s == "fixed") return HkaMode::fixed;
    throw ParameterError("unknown HKA mode '" + std::string(s) + "' (expected normal|inverted|fixed)");
}

std::string_view to_string(HkaMode m) {
    switch (m) {
        case HkaMode::normal: return "normal";
        case HkaMode::inverted: return "inverted";
        case HkaMode::fixed: return "fixed";
    }
    return "normal";
}

void HkaConfig::validate() const {
    if (passes < 2) throw ParameterError("HKA needs at least 2 stochastic passes, got " + std::to_string(passes));
    if (!(threshold > 0.0 && threshold < std::sqrt(2.0))) {
        throw ParameterError("HKA threshold must lie in (0, sqrt(2)), got " + std::to_string(threshold));
    }
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
        throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(dropout_rate));
    }
}

std::vector<Tensor2D> mc_dropout_predict(AdaptedModel& model, const Tensor2D& x, const HkaConfig& cfg, Rng& rng) {
    cfg.validate();
    const ScalePair neutral{1.0, 1.0};
    const DropoutSpec dropout{cfg.dropout_rate, &rng};
    std::vector<Tensor2D> out;
    out.reserve(cfg.passes);
    for (std::size_t i = 0; i < cfg.passes; ++i) {
        out.push_back(softmax(model.forward(x, std::span<const ScalePair>(&neutral, 1), &dropout)));
    }
    return out;
}

UncertaintyRecord sample_uncertainty(const Tensor2D& passes) {
    UncertaintyRecord rec;
    const std::size_t m = passes.rows();
    if (m == 0) return rec;
    // Deviations are taken relative to the first pass so identical passes give
    // exactly u = 0 rather than a rounding residue from the mean.
    auto anchor = passes.row(0);
    std::vector<double> shift(passes.cols(), 0.0);
    for (std::size_t i = 1; i < m; ++i) {
        auto p = passes.row(i);
        for (std::size_t c = 0; c < p.size(); ++c) shift[c] += p[c] - anchor[c];
    }
    for (double& v : shift) v /= static_cast<double>(m);
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        auto p = passes.row(i);
        for (std::size_t c = 0; c < p.size(); ++c) {
            const double d = (p[c] - anchor[c]) - shift[c];
            acc += d * d;
        }
    }
    rec.mean.resize(passes.cols());
    for (std::size_t c = 0; c < shift.size(); ++c) rec.mean[c] = anchor[c] + shift[c];
    rec.u = std::sqrt(acc / static_cast<double>(m));
    return rec;
}

std::vector<double> uncertainty(std::span<const Tensor2D> passes) {
    if (passes.empty()) return {};
    const std::size_t rows = passes.front().rows();
    const std::size_t cols = passes.front().cols();
    for (const auto& p : passes) {
        if (p.rows() != rows || p.cols() != cols) throw ShapeError("uncertainty: passes differ in shape");
    }
    std::vector<double> u(rows);
    Tensor2D per_sample(passes.size(), cols);
    for (std::size_t b = 0; b < rows; ++b) {
        for (std::size_t i = 0; i < passes.size(); ++i) {
            auto src = passes[i].row(b);
            std::copy(src.begin(), src.end(), per_sample.row(i).begin());
        }
        u[b] = sample_uncertainty(per_sample).u;
    }
    return u;
}

ScalePair allot_scales(double u, const HkaConfig& cfg) {
    if (cfg.mode == HkaMode::fixed) return cfg.fixed_scales;
    const double c = std::clamp(u, 0.0, 1.0);
    // 2 - (1 + c) is exact for 1 + c in [1, 2], so the pair sums to exactly 2.
    const double boosted = 1.0 + c;
    const double reduced = 2.0 - boosted;
    ScalePair s = c >= cfg.threshold ? ScalePair{boosted, reduced} : ScalePair{reduced, boosted};
    if (cfg.mode == HkaMode::inverted) std::swap(s.high, s.low);
    return s;
}

std::vector<ScalePair> allot_scales(std::span<const double> u, const HkaConfig& cfg) {
    std::vector<ScalePair> out;
    out.reserve(u.size());
    for (double v : u) out.push_back(allot_scales(v, cfg));
    return out;
}

}  // namespace vida
