#pragma once
// Labelled synthetic domains consumed by the adaptation loop. Labels are kept
// only for scoring; the adaptation path never reads them.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vida/tensor.hpp"

namespace vida {

enum class CorruptionKind { additive_noise, rotation, scale, mean_shift };

CorruptionKind parse_corruption(std::string_view s);
std::string_view to_string(CorruptionKind k);

struct DomainSpec {
    CorruptionKind kind = CorruptionKind::additive_noise;
    // Magnitude of the corruption; 0 leaves the source distribution untouched.
    //   additive_noise: noise standard deviation
    //   rotation:       angle in radians applied to every coordinate pair
    //   scale:          inputs multiplied by (1 + severity)
    //   mean_shift:     inputs translated by severity * direction
    double severity = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> direction;  // mean_shift only; unit length, derived from seed when empty
    std::string name;
};

struct LabeledBatch {
    Tensor2D inputs;
    std::vector<std::size_t> labels;
};

struct SourceSpec {
    std::size_t class_count = 4;
    std::size_t dim = 16;
    double radius = 3.0;  // class means lie on a sphere of this radius
    double spread = 1.0;  // per-coordinate standard deviation around each mean
    double offset = 0.0;  // distance of the sphere centre from the origin
    Tensor2D means;       // class_count x dim
};

struct TargetDomain {
    DomainSpec spec;
    std::vector<LabeledBatch> batches;
};

struct DomainStream {
    SourceSpec source;
    std::vector<TargetDomain> domains;
    std::size_t batch_size = 0;
    std::size_t batches_per_domain = 0;
};

}  // namespace vida
