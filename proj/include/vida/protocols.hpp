#pragma once
// Evaluation protocols over a synthetic stream: single-pass continual
// adaptation, repeated rounds, adapt-then-freeze generalisation, and the
// component ablation table.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vida/hka.hpp"
#include "vida/nn.hpp"
#include "vida/shift_metrics.hpp"
#include "vida/stream.hpp"
#include "vida/trainer.hpp"
#include "vida/vida_adapter.hpp"

namespace vida {

enum class Variant { source, vida, high_only, low_only, both_fixed, both_hka, both_ihka, two_low, two_high };

Variant parse_variant(std::string_view s);
std::string_view to_string(Variant v);
const std::vector<Variant>& all_variants();

struct MethodConfig {
    // `vida` takes the HKA mode from `hka`; the both_* variants pin it.
    Variant variant = Variant::vida;
    std::size_t low_rank = 1;
    std::size_t high_rank = 128;
    AdapterInit init = AdapterInit::zero_out_proj;
    double init_sigma = 0.01;
    HkaConfig hka;
    AugmentConfig augment{AugmentKind::feature_scale};
    double alpha = 0.999;
    double lr = 1e-3;
};

// Adapter layout and allotment rule implied by a variant.
struct ResolvedMethod {
    bool adapts = true;
    AdapterOptions adapters;
    HkaConfig hka;
};

ResolvedMethod resolve(const MethodConfig& method);

struct MetricsConfig {
    bool enabled = true;
    std::size_t bins = kDefaultHistogramBins;
    bool per_dimension = false;
    Normalizer normalizer = Normalizer::minmax_over_classes;
};

// Everything a protocol needs besides the method.
struct ExperimentContext {
    const MlpModel* source = nullptr;      // frozen source checkpoint
    const DomainStream* stream = nullptr;
    const LabeledBatch* source_test = nullptr;  // reference for the first domain's JS
    std::uint64_t seed = 0;
    MetricsConfig metrics;
};

struct DomainRow {
    std::size_t round = 0;
    std::size_t index = 0;
    std::string name;
    CorruptionKind kind = CorruptionKind::additive_noise;
    double severity = 0.0;
    double error = 0.0;
    double teacher_error = 0.0;
    double source_error = 0.0;
    double js_prev_domain = 0.0;
    double mean_intra_class_divergence = 0.0;
};

struct RunReport {
    std::string protocol;
    std::string method;
    std::uint64_t seed = 0;
    std::vector<DomainRow> rows;
    std::vector<double> round_means;
    double mean_error = 0.0;          // arithmetic mean over rows
    double mean_teacher_error = 0.0;
    double source_mean_error = 0.0;   // frozen source, same domains
    double gain = 0.0;                // source_mean_error - mean_error, in error-rate units
};

// Per-domain error of the frozen source model, one entry per target domain.
std::vector<double> frozen_domain_errors(const MlpModel& model, const DomainStream& stream);

// `final_state`, when given, receives the teacher and student after the last batch
// (left untouched for the source method).
RunReport run_ctta(const ExperimentContext& ctx, const MethodConfig& method, TeacherStudent* final_state = nullptr);
RunReport run_multiround(const ExperimentContext& ctx, const MethodConfig& method, std::size_t rounds,
                         TeacherStudent* final_state = nullptr);

struct DgRow {
    std::size_t index = 0;
    std::string name;
    bool adapted_on = false;  // true for the first K domains
    double adapted_error = 0.0;
    double source_error = 0.0;
};

struct DgReport {
    std::uint64_t seed = 0;
    std::size_t adapt_domains = 0;
    std::vector<DgRow> rows;
    double unseen_mean_adapted = 0.0;
    double unseen_mean_source = 0.0;
    std::uint64_t checksum_after_adapt = 0;
    std::uint64_t checksum_after_unseen = 0;
};

// Adapts on the first K domains, then scores the rest with every parameter frozen.
DgReport run_dg(const ExperimentContext& ctx, const MethodConfig& method, std::size_t adapt_domains);

struct AblationRow {
    Variant variant = Variant::source;
    std::vector<double> domain_errors;
    double mean_error = 0.0;
    double gain = 0.0;
};

struct AblationTable {
    std::uint64_t seed = 0;
    std::vector<std::string> domain_names;
    std::vector<AblationRow> rows;
};

// Runs each variant on the identical stream with identical seeds.
AblationTable run_ablation(const ExperimentContext& ctx, const MethodConfig& base, std::span<const Variant> variants);

// FNV-1a over the raw bytes of every base and adapter parameter of both models.
std::uint64_t parameter_checksum(const TeacherStudent& ts);

}  // namespace vida
