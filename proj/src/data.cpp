#include "vida/data.hpp"

#include <cmath>
#include <string>

#include "vida/errors.hpp"

namespace vida {

CorruptionKind parse_corruption(std::string_view s) {
    if (s == "additive_noise" || s == "noise") return CorruptionKind::additive_noise;
    if (s == "rotation") return CorruptionKind::rotation;
    if (s == "scale") return CorruptionKind::scale;
    if (s == "mean_shift" || s == "shift") return CorruptionKind::mean_shift;
    throw ParameterError("unknown corruption kind '" + std::string(s) + "'");
}

std::string_view to_string(CorruptionKind k) {
    switch (k) {
        case CorruptionKind::additive_noise: return "additive_noise";
        case CorruptionKind::rotation: return "rotation";
        case CorruptionKind::scale: return "scale";
        case CorruptionKind::mean_shift: return "mean_shift";
    }
    return "additive_noise";
}

std::vector<DomainSpec> default_schedule(std::size_t domain_count) {
    static const std::vector<DomainSpec> base = {
        // Mild geometric shifts interleaved with progressively darker
        // dimming, one of them (night) nearly extinguishing the input.
        {CorruptionKind::additive_noise, 0.3, 1, {}, "noise"},
        {CorruptionKind::scale, -0.8, 2, {}, "dim"},
        {CorruptionKind::rotation, 0.15, 3, {}, "rotate"},
        {CorruptionKind::scale, -0.9, 4, {}, "dusk"},
        {CorruptionKind::mean_shift, 0.8, 5, {}, "shift"},
        {CorruptionKind::scale, -0.97, 6, {}, "night"},
        {CorruptionKind::scale, -0.85, 7, {}, "fog"},
        {CorruptionKind::scale, -0.75, 8, {}, "haze"},
    };
    std::vector<DomainSpec> out;
    for (std::size_t i = 0; i < domain_count; ++i) {
        DomainSpec s = base[i % base.size()];
        if (i >= base.size()) {
            s.seed += 100 * (i / base.size());
            s.name += "_" + std::to_string(i / base.size());
        }
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

void random_direction(std::span<double> row, double length, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& v : row) {
            v = n01(rng);
            norm += v * v;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& v : row) v *= length / norm;
}

}  // namespace

SourceSpec make_source(std::size_t class_count, std::size_t dim, double radius, double spread, Rng& rng,
                       double offset) {
    if (class_count < 2) throw ParameterError("need at least 2 classes");
    if (dim < 2) throw ParameterError("need at least 2 input dimensions");
    if (!(radius > 0.0) || !(spread >= 0.0)) throw ParameterError("radius must be positive and spread non-negative");
    SourceSpec s;
    s.class_count = class_count;
    s.dim = dim;
    s.radius = radius;
    s.spread = spread;
    if (!(offset >= 0.0)) throw ParameterError("offset must be non-negative");
    s.offset = offset;
    s.means = Tensor2D(class_count, dim);
    for (std::size_t c = 0; c < class_count; ++c) random_direction(s.means.row(c), radius, rng);
    if (offset > 0.0) {
        std::vector<double> centre(dim);
        random_direction(centre, offset, rng);
        for (std::size_t c = 0; c < class_count; ++c) {
            auto row = s.means.row(c);
            for (std::size_t j = 0; j < dim; ++j) row[j] += centre[j];
        }
    }
    return s;
}

LabeledBatch sample_source(const SourceSpec& source, std::size_t n, Rng& rng) {
    LabeledBatch batch;
    batch.inputs = Tensor2D(n, source.dim);
    batch.labels.resize(n);
    std::uniform_int_distribution<std::size_t> pick(0, source.class_count - 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t c = pick(rng);
        batch.labels[r] = c;
        auto mean = source.means.row(c);
        auto row = batch.inputs.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = mean[j] + source.spread * noise(rng);
    }
    return batch;
}

std::vector<double> shift_direction(const DomainSpec& spec, std::size_t dim) {
    if (!spec.direction.empty()) {
        if (spec.direction.size() != dim) {
            throw ParameterError("mean_shift direction has " + std::to_string(spec.direction.size()) +
                                 " entries, expected " + std::to_string(dim));
        }
        double norm = 0.0;
        for (double v : spec.direction) norm += v * v;
        if (!(norm > 0.0)) throw ParameterError("mean_shift direction must be non-zero");
        std::vector<double> d = spec.direction;
        for (double& v : d) v /= std::sqrt(norm);
        return d;
    }
    Rng rng = make_rng(spec.seed, "shift-direction");
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> d(dim);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& v : d) {
            v = n01(rng);
            norm += v * v;
        }
    } while (norm < 1e-12);
    for (double& v : d) v /= std::sqrt(norm);
    return d;
}

Tensor2D apply_corruption(const DomainSpec& spec, const Tensor2D& x, Rng& rng) {
    Tensor2D out = x;
    switch (spec.kind) {
        case CorruptionKind::additive_noise: {
            if (spec.severity < 0.0) throw ParameterError("noise severity must be non-negative");
            if (spec.severity == 0.0) break;
            std::normal_distribution<double> noise(0.0, spec.severity);
            for (double& v : out.values()) v += noise(rng);
            break;
        }
        case CorruptionKind::rotation: {
            const double c = std::cos(spec.severity);
            const double s = std::sin(spec.severity);
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto row = out.row(r);
                for (std::size_t j = 0; j + 1 < row.size(); j += 2) {
                    const double a = row[j];
                    const double b = row[j + 1];
                    row[j] = c * a - s * b;
                    row[j + 1] = s * a + c * b;
                }
            }
            break;
        }
        case CorruptionKind::scale: {
            if (!(spec.severity > -1.0)) throw ParameterError("scale severity must exceed -1");
            const double f = 1.0 + spec.severity;
            for (double& v : out.values()) v *= f;
            break;
        }
        case CorruptionKind::mean_shift: {
            const std::vector<double> d = shift_direction(spec, x.cols());
            for (std::size_t r = 0; r < out.rows(); ++r) {
                auto row = out.row(r);
                for (std::size_t j = 0; j < row.size(); ++j) row[j] += spec.severity * d[j];
            }
            break;
        }
    }
    return out;
}

DomainStream generate_stream(const StreamConfig& cfg, std::uint64_t seed) {
    if (cfg.batch_size == 0 || cfg.batches_per_domain == 0) {
        throw ParameterError("batch size and batches per domain must be positive");
    }
    Rng source_rng = make_rng(seed, "source-means");
    DomainStream stream;
    stream.source = make_source(cfg.class_count, cfg.dim, cfg.radius, cfg.spread, source_rng, cfg.offset);
    stream.batch_size = cfg.batch_size;
    stream.batches_per_domain = cfg.batches_per_domain;
    const std::vector<DomainSpec> schedule = cfg.schedule.empty() ? default_schedule(cfg.domain_count) : cfg.schedule;
    if (schedule.empty()) throw ParameterError("stream needs at least one target domain");
    for (std::size_t d = 0; d < schedule.size(); ++d) {
        TargetDomain domain;
        domain.spec = schedule[d];
        if (domain.spec.name.empty()) domain.spec.name = std::string(to_string(domain.spec.kind)) + std::to_string(d);
        if (domain.spec.kind == CorruptionKind::mean_shift && domain.spec.direction.empty()) {
            // Directions vary with the stream seed so that different seeds see different shifts.
            DomainSpec keyed = domain.spec;
            keyed.seed = derive_seed(seed, "shift-" + std::to_string(domain.spec.seed));
            domain.spec.direction = shift_direction(keyed, cfg.dim);
        }
        Rng rng = make_rng(seed, "domain-" + std::to_string(d));
        for (std::size_t b = 0; b < cfg.batches_per_domain; ++b) {
            LabeledBatch batch = sample_source(stream.source, cfg.batch_size, rng);
            batch.inputs = apply_corruption(domain.spec, batch.inputs, rng);
            domain.batches.push_back(std::move(batch));
        }
        stream.domains.push_back(std::move(domain));
    }
    return stream;
}

SourceData generate_source_data(const SourceSpec& source, std::size_t train_size, std::size_t test_size,
                                std::uint64_t seed) {
    Rng train_rng = make_rng(seed, "source-train");
    Rng test_rng = make_rng(seed, "source-test");
    return {sample_source(source, train_size, train_rng), sample_source(source, test_size, test_rng)};
}

}  // namespace vida
