#pragma once
// Synthetic continually-shifting classification streams: Gaussian class
// clusters whose means sit on a sphere, observed through a sequence of
// corruptions.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vida/rng.hpp"
#include "vida/stream.hpp"

namespace vida {

struct StreamConfig {
    std::size_t class_count = 4;
    std::size_t dim = 16;
    double radius = 3.0;
    double spread = 1.0;
    double offset = 4.0;
    std::size_t batch_size = 32;
    std::size_t batches_per_domain = 50;
    // Empty means default_schedule(domain_count).
    std::vector<DomainSpec> schedule;
    std::size_t domain_count = 8;
};

// The stock corruption sequence; cycles through its entries when more
// domains are requested than it lists.
std::vector<DomainSpec> default_schedule(std::size_t domain_count);

// Means are random directions scaled to `radius`, then translated by `offset`
// along one further random direction shared by every class.
SourceSpec make_source(std::size_t class_count, std::size_t dim, double radius, double spread, Rng& rng,
                       double offset = 0.0);

LabeledBatch sample_source(const SourceSpec& source, std::size_t n, Rng& rng);

// Applies the corruption to fresh source draws. `rng` supplies the per-sample
// noise; the fixed parts (directions) come from the DomainSpec.
Tensor2D apply_corruption(const DomainSpec& spec, const Tensor2D& x, Rng& rng);

// Unit vector used by mean_shift domains.
std::vector<double> shift_direction(const DomainSpec& spec, std::size_t dim);

DomainStream generate_stream(const StreamConfig& cfg, std::uint64_t seed);

// Labelled source draws for pre-training and for measuring source accuracy.
struct SourceData {
    LabeledBatch train;
    LabeledBatch test;
};

SourceData generate_source_data(const SourceSpec& source, std::size_t train_size, std::size_t test_size,
                                std::uint64_t seed);

}  // namespace vida
