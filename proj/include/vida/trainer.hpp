#pragma once
// Teacher-student continual adaptation: the teacher scores an augmented view,
// the student fits those soft labels through its adapters, and the teacher
// follows the student by EMA.

#include <cstddef>
#include <string_view>
#include <vector>

#include "vida/hka.hpp"
#include "vida/nn.hpp"
#include "vida/rng.hpp"
#include "vida/stream.hpp"
#include "vida/vida_adapter.hpp"

namespace vida {

enum class AugmentKind { gaussian_jitter, feature_scale };

AugmentKind parse_augment_kind(std::string_view s);
std::string_view to_string(AugmentKind k);

struct AugmentConfig {
    AugmentKind kind = AugmentKind::gaussian_jitter;
    double sigma = 0.05;
    std::vector<double> factors{0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
};

// gaussian_jitter adds N(0, sigma^2) per entry; feature_scale multiplies each
// row by a factor drawn uniformly from `factors`.
Tensor2D augment(const Tensor2D& x, const AugmentConfig& cfg, Rng& rng);

// Soft labels: softmax of the deterministic (dropout-free) teacher logits.
Tensor2D pseudo_label(const AdaptedModel& teacher, const Tensor2D& x_aug, std::span<const ScalePair> scales);

struct TeacherStudent {
    AdaptedModel teacher;
    AdaptedModel student;
    double alpha = 0.999;
    std::size_t step = 0;
};

// Both models start as copies of `initial`.
TeacherStudent make_teacher_student(const AdaptedModel& initial, double alpha);

// Per-sample scales from the teacher (MC dropout + allotment, or the fixed pair).
std::vector<ScalePair> teacher_scales(TeacherStudent& ts, const Tensor2D& x, const HkaConfig& cfg, Rng& rng);

struct StepResult {
    double loss = 0.0;
    Tensor2D student_probs;  // student prediction on x before the update
    std::vector<ScalePair> scales;
};

// The update half of adapt_step, with the per-sample scales already chosen.
StepResult adapt_with_scales(TeacherStudent& ts, const Tensor2D& x, std::vector<ScalePair> scales, AdamState& opt,
                             const AugmentConfig& aug, Rng& rng);

// One online update on an unlabelled batch: scales, pseudo-labels, student
// forward, consistency loss, adapter-only backward, Adam, EMA.
StepResult adapt_step(TeacherStudent& ts, const Tensor2D& x, const HkaConfig& hka, AdamState& opt,
                      const AugmentConfig& aug, Rng& rng);

// teacher = alpha * teacher + (1 - alpha) * student over adapter parameters.
// Throws StateError if the two models differ in structure.
void ema_update(TeacherStudent& ts);

struct StreamOptions {
    HkaConfig hka;
    AugmentConfig augment;
    bool adapt = true;             // false: score only, no parameter changes
    bool collect_features = false; // keep student hidden features per domain
};

struct DomainResult {
    std::size_t index = 0;
    std::string name;
    double error = 0.0;          // online student error
    double teacher_error = 0.0;  // teacher on the same batches, same scales
    double mean_loss = 0.0;
    Tensor2D features;
    std::vector<std::size_t> labels;
};

struct StreamReport {
    std::vector<DomainResult> domains;
    double mean_error = 0.0;
    double mean_teacher_error = 0.0;
};

// Visits every batch once in order. Each batch is scored with the model state
// it arrives to, then (if adapting) used for exactly one update.
StreamReport run_stream(TeacherStudent& ts, const DomainStream& stream, AdamState& opt,
                        const StreamOptions& options, Rng& rng);

}  // namespace vida
