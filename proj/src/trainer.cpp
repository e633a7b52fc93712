#include "vida/trainer.hpp"

#include <cmath>
#include <string>

#include "vida/errors.hpp"
#include "vida/kernels.hpp"
#include "vida/shift_metrics.hpp"

namespace vida {

AugmentKind parse_augment_kind(std::string_view s) {
    if (s == "gaussian_jitter" || s == "jitter") return AugmentKind::gaussian_jitter;
    if (s == "feature_scale" || s == "scale") return AugmentKind::feature_scale;
    throw ParameterError("unknown augmentation '" + std::string(s) + "'");
}

std::string_view to_string(AugmentKind k) {
    return k == AugmentKind::feature_scale ? "feature_scale" : "gaussian_jitter";
}

Tensor2D augment(const Tensor2D& x, const AugmentConfig& cfg, Rng& rng) {
    Tensor2D out = x;
    if (cfg.kind == AugmentKind::gaussian_jitter) {
        if (cfg.sigma < 0.0) throw ParameterError("jitter sigma must be non-negative");
        if (cfg.sigma == 0.0) return out;
        std::normal_distribution<double> noise(0.0, cfg.sigma);
        for (double& v : out.values()) v += noise(rng);
        return out;
    }
    if (cfg.factors.empty()) throw ParameterError("feature_scale augmentation needs at least one factor");
    std::uniform_int_distribution<std::size_t> pick(0, cfg.factors.size() - 1);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        const double f = cfg.factors[pick(rng)];
        for (double& v : out.row(r)) v *= f;
    }
    return out;
}

Tensor2D pseudo_label(const AdaptedModel& teacher, const Tensor2D& x_aug, std::span<const ScalePair> scales) {
    return softmax(teacher.evaluate(x_aug, scales));
}

TeacherStudent make_teacher_student(const AdaptedModel& initial, double alpha) {
    if (!(alpha >= 0.0 && alpha < 1.0)) {
        throw ParameterError("EMA coefficient must lie in [0, 1), got " + std::to_string(alpha));
    }
    return TeacherStudent{initial, initial, alpha, 0};
}

std::vector<ScalePair> teacher_scales(TeacherStudent& ts, const Tensor2D& x, const HkaConfig& cfg, Rng& rng) {
    if (cfg.mode == HkaMode::fixed) return std::vector<ScalePair>(x.rows(), cfg.fixed_scales);
    const std::vector<Tensor2D> passes = mc_dropout_predict(ts.teacher, x, cfg, rng);
    return allot_scales(uncertainty(passes), cfg);
}

StepResult adapt_with_scales(TeacherStudent& ts, const Tensor2D& x, std::vector<ScalePair> scales, AdamState& opt,
                             const AugmentConfig& aug, Rng& rng) {
    if (x.rows() == 0) throw ParameterError("adapt_step needs a non-empty batch");
    StepResult result;
    result.scales = std::move(scales);
    const Tensor2D target = pseudo_label(ts.teacher, augment(x, aug, rng), result.scales);
    result.student_probs = softmax(ts.student.forward(x, result.scales));
    result.loss = soft_cross_entropy(target, result.student_probs);
    if (!std::isfinite(result.loss)) throw TrainingError("consistency loss became non-finite");

    ts.student.zero_grad();
    ts.student.backward(soft_cross_entropy_logit_grad(target, result.student_probs));
    const std::vector<ParamRef> params = ts.student.adapter_parameters();
    adam_step(opt, params);
    ema_update(ts);
    return result;
}

StepResult adapt_step(TeacherStudent& ts, const Tensor2D& x, const HkaConfig& hka, AdamState& opt,
                      const AugmentConfig& aug, Rng& rng) {
    if (x.rows() == 0) throw ParameterError("adapt_step needs a non-empty batch");
    return adapt_with_scales(ts, x, teacher_scales(ts, x, hka, rng), opt, aug, rng);
}

void ema_update(TeacherStudent& ts) {
    if (ts.teacher.layer_count() != ts.student.layer_count()) {
        throw StateError("teacher and student have different layer counts");
    }
    const std::vector<ParamRef> teacher = ts.teacher.adapter_parameters();
    const std::vector<ParamRef> student = ts.student.adapter_parameters();
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        if (teacher[i].value.size() != student[i].value.size()) {
            throw StateError("teacher and student differ in shape at '" + teacher[i].name + "'");
        }
    }
    for (std::size_t i = 0; i < teacher.size(); ++i) kernels::ema(ts.alpha, student[i].value, teacher[i].value);
    ++ts.step;
}

StreamReport run_stream(TeacherStudent& ts, const DomainStream& stream, AdamState& opt,
                        const StreamOptions& options, Rng& rng) {
    if (stream.domains.empty()) throw ParameterError("run_stream needs at least one target domain");
    if (options.hka.mode != HkaMode::fixed) options.hka.validate();
    StreamReport report;
    for (std::size_t d = 0; d < stream.domains.size(); ++d) {
        const TargetDomain& domain = stream.domains[d];
        if (domain.batches.empty()) throw ParameterError("target domain " + std::to_string(d) + " has no batches");
        DomainResult result;
        result.index = d;
        result.name = domain.spec.name;
        std::size_t seen = 0;
        double wrong = 0.0;
        double teacher_wrong = 0.0;
        double loss = 0.0;
        std::vector<double> features;
        std::size_t feature_cols = 0;
        for (const LabeledBatch& batch : domain.batches) {
            std::vector<ScalePair> scales = teacher_scales(ts, batch.inputs, options.hka, rng);
            const Tensor2D teacher_probs = softmax(ts.teacher.evaluate(batch.inputs, scales));
            teacher_wrong += per_domain_error(teacher_probs, batch.labels) * static_cast<double>(batch.labels.size());
            Tensor2D probs;
            if (options.adapt) {
                StepResult step = adapt_with_scales(ts, batch.inputs, std::move(scales), opt, options.augment, rng);
                loss += step.loss;
                probs = std::move(step.student_probs);
            } else {
                probs = softmax(ts.student.forward(batch.inputs, scales));
            }
            if (options.collect_features) {
                const Tensor2D& f = ts.student.features();
                features.insert(features.end(), f.values().begin(), f.values().end());
                feature_cols = f.cols();
            }
            wrong += per_domain_error(probs, batch.labels) * static_cast<double>(batch.labels.size());
            seen += batch.labels.size();
            if (options.collect_features) {
                result.labels.insert(result.labels.end(), batch.labels.begin(), batch.labels.end());
            }
        }
        result.error = wrong / static_cast<double>(seen);
        result.teacher_error = teacher_wrong / static_cast<double>(seen);
        result.mean_loss = loss / static_cast<double>(domain.batches.size());
        if (options.collect_features && feature_cols > 0) {
            const std::size_t rows = features.size() / feature_cols;
            result.features = Tensor2D(rows, feature_cols, std::move(features));
        }
        report.domains.push_back(std::move(result));
    }
    double sum = 0.0;
    double teacher_sum = 0.0;
    for (const auto& r : report.domains) {
        sum += r.error;
        teacher_sum += r.teacher_error;
    }
    report.mean_error = sum / static_cast<double>(report.domains.size());
    report.mean_teacher_error = teacher_sum / static_cast<double>(report.domains.size());
    return report;
}

}  // namespace vida
