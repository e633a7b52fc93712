#include "vida/protocols.hpp"

#include <cstring>
#include <string>

#include "vida/errors.hpp"
#include "vida/pretrain.hpp"

namespace vida {
namespace {

void require_context(const ExperimentContext& ctx) {
    if (!ctx.source || !ctx.stream) throw ParameterError("experiment context needs a source model and a stream");
    if (ctx.stream->domains.empty()) throw ParameterError("stream has no target domains");
    if (ctx.source->input_dim() != ctx.stream->source.dim ||
        ctx.source->class_count() != ctx.stream->source.class_count) {
        throw ShapeError("checkpoint shape does not match the stream (input " + std::to_string(ctx.source->input_dim()) +
                         " vs " + std::to_string(ctx.stream->source.dim) + ", classes " +
                         std::to_string(ctx.source->class_count()) + " vs " +
                         std::to_string(ctx.stream->source.class_count) + ")");
    }
}

struct DomainObservation {
    double error = 0.0;
    double teacher_error = 0.0;
    Tensor2D features;
    std::vector<std::size_t> labels;
};

std::vector<DomainObservation> observe_frozen(const MlpModel& model, const DomainStream& stream, bool features) {
    std::vector<DomainObservation> out;
    for (const TargetDomain& d : stream.domains) {
        DomainObservation obs;
        std::size_t wrong = 0;
        std::size_t seen = 0;
        std::vector<double> feats;
        std::size_t cols = 0;
        for (const LabeledBatch& b : d.batches) {
            const Tensor2D logits = mlp_logits(model, b.inputs);
            for (std::size_t r = 0; r < logits.rows(); ++r) {
                if (argmax(logits.row(r)) != b.labels[r]) ++wrong;
            }
            seen += b.labels.size();
            if (features) {
                const Tensor2D f = mlp_features(model, b.inputs);
                feats.insert(feats.end(), f.values().begin(), f.values().end());
                cols = f.cols();
                obs.labels.insert(obs.labels.end(), b.labels.begin(), b.labels.end());
            }
        }
        obs.error = seen ? static_cast<double>(wrong) / static_cast<double>(seen) : 0.0;
        obs.teacher_error = obs.error;
        if (features && cols > 0) {
            const std::size_t rows = feats.size() / cols;
            obs.features = Tensor2D(rows, cols, std::move(feats));
        }
        out.push_back(std::move(obs));
    }
    return out;
}

double domain_js(const Tensor2D& a, const Tensor2D& b, const MetricsConfig& m) {
    if (a.empty() || b.empty()) return 0.0;
    return m.per_dimension ? feature_js_per_dimension(a, b, m.bins) : feature_js(a, b, m.bins);
}

double mean_intra(const Tensor2D& features, std::span<const std::size_t> labels, std::size_t classes,
                  const MetricsConfig& m) {
    if (features.empty()) return 0.0;
    const std::vector<double> e = intra_class_divergence(split_by_class(features, labels, classes), m.normalizer);
    if (e.empty()) return 0.0;
    double acc = 0.0;
    for (double v : e) acc += v;
    return acc / static_cast<double>(e.size());
}

void fill_rows(RunReport& report, std::size_t round, const std::vector<DomainObservation>& obs,
               const std::vector<double>& source_errors, const ExperimentContext& ctx, const Tensor2D& reference) {
    const DomainStream& stream = *ctx.stream;
    double sum = 0.0;
    for (std::size_t d = 0; d < obs.size(); ++d) {
        DomainRow row;
        row.round = round;
        row.index = d;
        row.name = stream.domains[d].spec.name;
        row.kind = stream.domains[d].spec.kind;
        row.severity = stream.domains[d].spec.severity;
        row.error = obs[d].error;
        row.teacher_error = obs[d].teacher_error;
        row.source_error = source_errors[d];
        if (ctx.metrics.enabled) {
            row.js_prev_domain = domain_js(obs[d].features, d == 0 ? reference : obs[d - 1].features, ctx.metrics);
            row.mean_intra_class_divergence =
                mean_intra(obs[d].features, obs[d].labels, stream.source.class_count, ctx.metrics);
        }
        sum += row.error;
        report.rows.push_back(std::move(row));
    }
    report.round_means.push_back(sum / static_cast<double>(obs.size()));
}

void finish(RunReport& report) {
    double sum = 0.0;
    double teacher = 0.0;
    for (const auto& r : report.rows) {
        sum += r.error;
        teacher += r.teacher_error;
    }
    const double n = static_cast<double>(report.rows.size());
    report.mean_error = sum / n;
    report.mean_teacher_error = teacher / n;
    report.gain = report.source_mean_error - report.mean_error;
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

TeacherStudent build_teacher_student(const ExperimentContext& ctx, const MethodConfig& method,
                                     const ResolvedMethod& resolved) {
    Rng init_rng = make_rng(ctx.seed, "adapter-init");
    const AdaptedModel initial = attach_adapters(*ctx.source, resolved.adapters, init_rng);
    return make_teacher_student(initial, method.alpha);
}

DomainStream slice(const DomainStream& stream, std::size_t begin, std::size_t end) {
    DomainStream out;
    out.source = stream.source;
    out.batch_size = stream.batch_size;
    out.batches_per_domain = stream.batches_per_domain;
    out.domains.assign(stream.domains.begin() + static_cast<std::ptrdiff_t>(begin),
                       stream.domains.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

}  // namespace

Variant parse_variant(std::string_view s) {
    for (Variant v : all_variants()) {
        if (to_string(v) == s) return v;
    }
    if (s == "vida") return Variant::vida;
    throw ParameterError("unknown method/variant '" + std::string(s) + "'");
}

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::source: return "source";
        case Variant::vida: return "vida";
        case Variant::high_only: return "high_only";
        case Variant::low_only: return "low_only";
        case Variant::both_fixed: return "both_fixed";
        case Variant::both_hka: return "both_hka";
        case Variant::both_ihka: return "both_ihka";
        case Variant::two_low: return "two_low";
        case Variant::two_high: return "two_high";
    }
    return "vida";
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v = {Variant::source,     Variant::high_only, Variant::low_only,
                                           Variant::both_fixed, Variant::both_hka,  Variant::both_ihka,
                                           Variant::two_low,    Variant::two_high};
    return v;
}

ResolvedMethod resolve(const MethodConfig& method) {
    ResolvedMethod r;
    r.hka = method.hka;
    r.adapters.low_rank = method.low_rank;
    r.adapters.high_rank = method.high_rank;
    r.adapters.init = method.init;
    r.adapters.sigma = method.init_sigma;
    const ScalePair unit{1.0, 1.0};
    switch (method.variant) {
        case Variant::source:
            r.adapts = false;
            break;
        case Variant::vida:
            break;
        case Variant::high_only:
            r.adapters.low_rank = 0;
            r.hka.mode = HkaMode::fixed;
            r.hka.fixed_scales = unit;
            break;
        case Variant::low_only:
            r.adapters.high_rank = 0;
            r.hka.mode = HkaMode::fixed;
            r.hka.fixed_scales = unit;
            break;
        case Variant::both_fixed:
            r.hka.mode = HkaMode::fixed;
            break;
        case Variant::both_hka:
            r.hka.mode = HkaMode::normal;
            break;
        case Variant::both_ihka:
            r.hka.mode = HkaMode::inverted;
            break;
        case Variant::two_low:
            r.adapters.high_rank = method.low_rank;
            r.adapters.enforce_rank_rules = false;
            r.hka.mode = HkaMode::fixed;
            r.hka.fixed_scales = unit;
            break;
        case Variant::two_high:
            r.adapters.low_rank = method.high_rank;
            r.adapters.enforce_rank_rules = false;
            r.hka.mode = HkaMode::fixed;
            r.hka.fixed_scales = unit;
            break;
    }
    return r;
}

std::vector<double> frozen_domain_errors(const MlpModel& model, const DomainStream& stream) {
    std::vector<double> out;
    for (const auto& obs : observe_frozen(model, stream, false)) out.push_back(obs.error);
    return out;
}

RunReport run_multiround(const ExperimentContext& ctx, const MethodConfig& method, std::size_t rounds,
                         TeacherStudent* final_state) {
    require_context(ctx);
    if (rounds < 1) throw ParameterError("rounds must be at least 1");
    const ResolvedMethod resolved = resolve(method);
    const bool features = ctx.metrics.enabled;

    RunReport report;
    report.protocol = rounds == 1 ? "ctta" : "multiround";
    report.method = std::string(to_string(method.variant));
    report.seed = ctx.seed;

    const std::vector<DomainObservation> frozen = observe_frozen(*ctx.source, *ctx.stream, features && !resolved.adapts);
    std::vector<double> source_errors;
    for (const auto& o : frozen) source_errors.push_back(o.error);
    report.source_mean_error = mean_of(source_errors);

    Tensor2D reference;
    if (features && ctx.source_test) reference = mlp_features(*ctx.source, ctx.source_test->inputs);

    if (!resolved.adapts) {
        for (std::size_t r = 0; r < rounds; ++r) fill_rows(report, r, frozen, source_errors, ctx, reference);
        finish(report);
        return report;
    }

    TeacherStudent ts = build_teacher_student(ctx, method, resolved);
    AdamState opt;
    opt.lr = method.lr;
    Rng rng = make_rng(ctx.seed, "adapt");
    StreamOptions options;
    options.hka = resolved.hka;
    options.augment = method.augment;
    options.adapt = true;
    options.collect_features = features;
    for (std::size_t r = 0; r < rounds; ++r) {
        StreamReport sr = run_stream(ts, *ctx.stream, opt, options, rng);
        std::vector<DomainObservation> obs;
        for (auto& d : sr.domains) {
            obs.push_back({d.error, d.teacher_error, std::move(d.features), std::move(d.labels)});
        }
        fill_rows(report, r, obs, source_errors, ctx, reference);
    }
    finish(report);
    if (final_state) *final_state = std::move(ts);
    return report;
}

RunReport run_ctta(const ExperimentContext& ctx, const MethodConfig& method, TeacherStudent* final_state) {
    return run_multiround(ctx, method, 1, final_state);
}

std::uint64_t parameter_checksum(const TeacherStudent& ts) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::span<const double> values) {
        for (double v : values) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    };
    for (const AdaptedModel* m : {&ts.teacher, &ts.student}) {
        for (std::size_t i = 0; i < m->layer_count(); ++i) {
            const AdaptedLayer& l = m->layer(i);
            mix(l.base().weight.values());
            mix(l.base().bias);
            mix(l.vida().low_down.values());
            mix(l.vida().low_up.values());
            mix(l.vida().high_up.values());
            mix(l.vida().high_down.values());
        }
    }
    return h;
}

DgReport run_dg(const ExperimentContext& ctx, const MethodConfig& method, std::size_t adapt_domains) {
    require_context(ctx);
    const std::size_t n = ctx.stream->domains.size();
    if (adapt_domains < 1 || adapt_domains >= n) {
        throw ParameterError("adapt-domains K must satisfy 1 <= K < " + std::to_string(n) + ", got " +
                             std::to_string(adapt_domains));
    }
    const ResolvedMethod resolved = resolve(method);
    DgReport report;
    report.seed = ctx.seed;
    report.adapt_domains = adapt_domains;
    const std::vector<double> source_errors = frozen_domain_errors(*ctx.source, *ctx.stream);

    std::vector<double> adapted_errors(n);
    if (!resolved.adapts) {
        adapted_errors = source_errors;
    } else {
        TeacherStudent ts = build_teacher_student(ctx, method, resolved);
        AdamState opt;
        opt.lr = method.lr;
        Rng rng = make_rng(ctx.seed, "adapt");
        StreamOptions options;
        options.hka = resolved.hka;
        options.augment = method.augment;

        options.adapt = true;
        const StreamReport seen = run_stream(ts, slice(*ctx.stream, 0, adapt_domains), opt, options, rng);
        report.checksum_after_adapt = parameter_checksum(ts);

        options.adapt = false;
        const StreamReport unseen = run_stream(ts, slice(*ctx.stream, adapt_domains, n), opt, options, rng);
        report.checksum_after_unseen = parameter_checksum(ts);
        if (report.checksum_after_adapt != report.checksum_after_unseen) {
            throw StateError("parameters changed while scoring unseen domains");
        }
        for (std::size_t d = 0; d < adapt_domains; ++d) adapted_errors[d] = seen.domains[d].error;
        for (std::size_t d = adapt_domains; d < n; ++d) adapted_errors[d] = unseen.domains[d - adapt_domains].error;
    }

    double adapted_sum = 0.0;
    double source_sum = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
        DgRow row;
        row.index = d;
        row.name = ctx.stream->domains[d].spec.name;
        row.adapted_on = d < adapt_domains;
        row.adapted_error = adapted_errors[d];
        row.source_error = source_errors[d];
        if (!row.adapted_on) {
            adapted_sum += row.adapted_error;
            source_sum += row.source_error;
        }
        report.rows.push_back(std::move(row));
    }
    const double unseen_count = static_cast<double>(n - adapt_domains);
    report.unseen_mean_adapted = adapted_sum / unseen_count;
    report.unseen_mean_source = source_sum / unseen_count;
    return report;
}

AblationTable run_ablation(const ExperimentContext& ctx, const MethodConfig& base, std::span<const Variant> variants) {
    require_context(ctx);
    if (variants.empty()) throw ParameterError("ablation needs at least one variant");
    AblationTable table;
    table.seed = ctx.seed;
    for (const auto& d : ctx.stream->domains) table.domain_names.push_back(d.spec.name);
    ExperimentContext quiet = ctx;
    quiet.metrics.enabled = false;
    for (Variant v : variants) {
        MethodConfig m = base;
        m.variant = v;
        const RunReport r = run_ctta(quiet, m);
        AblationRow row;
        row.variant = v;
        for (const auto& dr : r.rows) row.domain_errors.push_back(dr.error);
        row.mean_error = r.mean_error;
        row.gain = r.gain;
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace vida
