#pragma once
// Configuration shared by every CLI subcommand. The JSON config file uses the
// same keys as the command-line flags (without the leading dashes).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "vida/data.hpp"
#include "vida/pretrain.hpp"
#include "vida/protocols.hpp"

namespace vida {

struct HarnessConfig {
    std::uint64_t seed = 1;
    StreamConfig stream;
    std::size_t train_size = 4096;
    std::size_t test_size = 2000;
    PretrainConfig pretrain;
    MethodConfig method;
    std::size_t rounds = 3;
    std::size_t adapt_domains = 0;  // 0 selects half of the domains
    std::vector<Variant> variants = all_variants();
    MetricsConfig metrics;
    ScalePair fold_scales{1.0, 1.0};
    std::string checkpoint;  // plain source weights; empty pre-trains in-process
    std::string weights;     // input of fold / metrics
    std::string out = "out";

    std::size_t resolved_adapt_domains(std::size_t domain_count) const;
};

nlohmann::json to_json(const HarnessConfig& cfg);
// Unknown keys and ill-typed values raise ParseError.
void apply_json(HarnessConfig& cfg, const nlohmann::json& j);
HarnessConfig load_config(const std::filesystem::path& path);

// Stream, source data and the frozen source model for one configuration.
struct Experiment {
    DomainStream stream;
    SourceData source_data;
    MlpModel source;
    PretrainResult pretrain;  // empty when loaded from a checkpoint
    bool pretrained = false;
    double source_test_error = 0.0;
};

Experiment prepare_experiment(const HarnessConfig& cfg);
// Pre-trains the source model for `cfg` (ignores cfg.checkpoint).
PretrainResult pretrain_for(const HarnessConfig& cfg, const SourceData& data);
ExperimentContext make_context(const Experiment& exp, const HarnessConfig& cfg);

}  // namespace vida
