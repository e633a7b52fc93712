#include "vida/harness_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "vida/errors.hpp"
#include "vida/weights_io.hpp"

namespace vida {

using nlohmann::json;

std::size_t HarnessConfig::resolved_adapt_domains(std::size_t domain_count) const {
    return adapt_domains == 0 ? domain_count / 2 : adapt_domains;
}

namespace {

std::string init_name(AdapterInit i) { return i == AdapterInit::gaussian ? "gaussian" : "zero_out_proj"; }

AdapterInit parse_init(const std::string& s) {
    if (s == "zero_out_proj" || s == "zero") return AdapterInit::zero_out_proj;
    if (s == "gaussian") return AdapterInit::gaussian;
    throw ParameterError("unknown adapter init '" + s + "'");
}

std::string normalizer_name(Normalizer n) { return n == Normalizer::divide_by_max ? "divide_by_max" : "minmax_over_classes"; }

json schedule_json(const std::vector<DomainSpec>& schedule) {
    json arr = json::array();
    for (const auto& d : schedule) {
        json e{{"kind", std::string(to_string(d.kind))}, {"severity", d.severity}, {"seed", d.seed}, {"name", d.name}};
        if (!d.direction.empty()) e["direction"] = d.direction;
        arr.push_back(std::move(e));
    }
    return arr;
}

template <typename T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ParseError("config key '" + key + "': " + e.what());
    }
}

}  // namespace

json to_json(const HarnessConfig& c) {
    std::vector<std::string> variants;
    for (Variant v : c.variants) variants.emplace_back(to_string(v));
    json j;
    j["seed"] = c.seed;
    j["classes"] = c.stream.class_count;
    j["dim"] = c.stream.dim;
    j["radius"] = c.stream.radius;
    j["spread"] = c.stream.spread;
    j["offset"] = c.stream.offset;
    j["domains"] = c.stream.domain_count;
    j["batch-size"] = c.stream.batch_size;
    j["batches-per-domain"] = c.stream.batches_per_domain;
    j["schedule"] = schedule_json(c.stream.schedule.empty() ? default_schedule(c.stream.domain_count) : c.stream.schedule);
    j["train-size"] = c.train_size;
    j["test-size"] = c.test_size;
    j["hidden"] = c.pretrain.hidden;
    j["epochs"] = c.pretrain.epochs;
    j["pretrain-batch"] = c.pretrain.batch_size;
    j["pretrain-lr"] = c.pretrain.lr;
    j["method"] = std::string(to_string(c.method.variant));
    j["dl"] = c.method.low_rank;
    j["dh"] = c.method.high_rank;
    j["init"] = init_name(c.method.init);
    j["init-sigma"] = c.method.init_sigma;
    j["hka-mode"] = std::string(to_string(c.method.hka.mode));
    j["hka-m"] = c.method.hka.passes;
    j["hka-theta"] = c.method.hka.threshold;
    j["dropout-rate"] = c.method.hka.dropout_rate;
    j["lambda-h"] = c.method.hka.fixed_scales.high;
    j["lambda-l"] = c.method.hka.fixed_scales.low;
    j["augment"] = std::string(to_string(c.method.augment.kind));
    j["jitter-sigma"] = c.method.augment.sigma;
    j["scale-factors"] = c.method.augment.factors;
    j["alpha"] = c.method.alpha;
    j["lr"] = c.method.lr;
    j["rounds"] = c.rounds;
    j["adapt-domains"] = c.adapt_domains;
    j["variants"] = variants;
    j["metrics"] = c.metrics.enabled;
    j["bins"] = c.metrics.bins;
    j["per-dimension"] = c.metrics.per_dimension;
    j["normalizer"] = normalizer_name(c.metrics.normalizer);
    j["fold-lambda-h"] = c.fold_scales.high;
    j["fold-lambda-l"] = c.fold_scales.low;
    j["checkpoint"] = c.checkpoint;
    j["weights"] = c.weights;
    j["out"] = c.out;
    return j;
}

void apply_json(HarnessConfig& c, const json& j) {
    if (!j.is_object()) throw ParseError("config document must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
        else if (key == "classes") c.stream.class_count = get_as<std::size_t>(v, key);
        else if (key == "dim") c.stream.dim = get_as<std::size_t>(v, key);
        else if (key == "radius") c.stream.radius = get_as<double>(v, key);
        else if (key == "spread") c.stream.spread = get_as<double>(v, key);
        else if (key == "offset") c.stream.offset = get_as<double>(v, key);
        else if (key == "domains") c.stream.domain_count = get_as<std::size_t>(v, key);
        else if (key == "batch-size") c.stream.batch_size = get_as<std::size_t>(v, key);
        else if (key == "batches-per-domain") c.stream.batches_per_domain = get_as<std::size_t>(v, key);
        else if (key == "schedule") {
            if (!v.is_array()) throw ParseError("config key 'schedule' must be an array");
            c.stream.schedule.clear();
            for (const auto& e : v) {
                DomainSpec d;
                d.kind = parse_corruption(get_as<std::string>(e.at("kind"), "schedule.kind"));
                d.severity = get_as<double>(e.at("severity"), "schedule.severity");
                d.seed = e.contains("seed") ? get_as<std::uint64_t>(e["seed"], "schedule.seed") : c.stream.schedule.size();
                d.name = e.contains("name") ? get_as<std::string>(e["name"], "schedule.name") : std::string{};
                if (e.contains("direction")) d.direction = get_as<std::vector<double>>(e["direction"], "schedule.direction");
                c.stream.schedule.push_back(std::move(d));
            }
            c.stream.domain_count = c.stream.schedule.size();
        }
        else if (key == "train-size") c.train_size = get_as<std::size_t>(v, key);
        else if (key == "test-size") c.test_size = get_as<std::size_t>(v, key);
        else if (key == "hidden") c.pretrain.hidden = get_as<std::vector<std::size_t>>(v, key);
        else if (key == "epochs") c.pretrain.epochs = get_as<std::size_t>(v, key);
        else if (key == "pretrain-batch") c.pretrain.batch_size = get_as<std::size_t>(v, key);
        else if (key == "pretrain-lr") c.pretrain.lr = get_as<double>(v, key);
        else if (key == "method") c.method.variant = parse_variant(get_as<std::string>(v, key));
        else if (key == "dl") c.method.low_rank = get_as<std::size_t>(v, key);
        else if (key == "dh") c.method.high_rank = get_as<std::size_t>(v, key);
        else if (key == "init") c.method.init = parse_init(get_as<std::string>(v, key));
        else if (key == "init-sigma") c.method.init_sigma = get_as<double>(v, key);
        else if (key == "hka-mode") c.method.hka.mode = parse_hka_mode(get_as<std::string>(v, key));
        else if (key == "hka-m") c.method.hka.passes = get_as<std::size_t>(v, key);
        else if (key == "hka-theta") c.method.hka.threshold = get_as<double>(v, key);
        else if (key == "dropout-rate") c.method.hka.dropout_rate = get_as<double>(v, key);
        else if (key == "lambda-h") c.method.hka.fixed_scales.high = get_as<double>(v, key);
        else if (key == "lambda-l") c.method.hka.fixed_scales.low = get_as<double>(v, key);
        else if (key == "augment") c.method.augment.kind = parse_augment_kind(get_as<std::string>(v, key));
        else if (key == "jitter-sigma") c.method.augment.sigma = get_as<double>(v, key);
        else if (key == "scale-factors") c.method.augment.factors = get_as<std::vector<double>>(v, key);
        else if (key == "alpha") c.method.alpha = get_as<double>(v, key);
        else if (key == "lr") c.method.lr = get_as<double>(v, key);
        else if (key == "rounds") c.rounds = get_as<std::size_t>(v, key);
        else if (key == "adapt-domains") c.adapt_domains = get_as<std::size_t>(v, key);
        else if (key == "variants") {
            c.variants.clear();
            for (const auto& s : get_as<std::vector<std::string>>(v, key)) c.variants.push_back(parse_variant(s));
        }
        else if (key == "metrics") c.metrics.enabled = get_as<bool>(v, key);
        else if (key == "bins") c.metrics.bins = get_as<std::size_t>(v, key);
        else if (key == "per-dimension") c.metrics.per_dimension = get_as<bool>(v, key);
        else if (key == "normalizer") c.metrics.normalizer = parse_normalizer(get_as<std::string>(v, key));
        else if (key == "fold-lambda-h") c.fold_scales.high = get_as<double>(v, key);
        else if (key == "fold-lambda-l") c.fold_scales.low = get_as<double>(v, key);
        else if (key == "checkpoint") c.checkpoint = get_as<std::string>(v, key);
        else if (key == "weights") c.weights = get_as<std::string>(v, key);
        else if (key == "out") c.out = get_as<std::string>(v, key);
        else throw ParseError("unknown config key '" + key + "'");
    }
}

HarnessConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ParseError("config file '" + path.string() + "' is not valid JSON at byte " + std::to_string(e.byte));
    }
    HarnessConfig cfg;
    apply_json(cfg, j);
    return cfg;
}

PretrainResult pretrain_for(const HarnessConfig& cfg, const SourceData& data) {
    std::vector<std::size_t> widths{cfg.stream.dim};
    widths.insert(widths.end(), cfg.pretrain.hidden.begin(), cfg.pretrain.hidden.end());
    widths.push_back(cfg.stream.class_count);
    Rng init_rng = make_rng(cfg.seed, "pretrain-init");
    MlpModel model = make_mlp(widths, init_rng);
    Rng shuffle_rng = make_rng(cfg.seed, "pretrain-shuffle");
    return pretrain_source(std::move(model), data.train, cfg.pretrain, shuffle_rng);
}

Experiment prepare_experiment(const HarnessConfig& cfg) {
    Experiment exp;
    exp.stream = generate_stream(cfg.stream, cfg.seed);
    exp.source_data = generate_source_data(exp.stream.source, cfg.train_size, cfg.test_size, cfg.seed);
    if (!cfg.checkpoint.empty()) {
        exp.source = load_plain_weights(cfg.checkpoint);
    } else {
        exp.pretrain = pretrain_for(cfg, exp.source_data);
        exp.source = exp.pretrain.model;
        exp.pretrained = true;
    }
    exp.source_test_error = evaluate_error(exp.source, exp.source_data.test);
    return exp;
}

ExperimentContext make_context(const Experiment& exp, const HarnessConfig& cfg) {
    ExperimentContext ctx;
    ctx.source = &exp.source;
    ctx.stream = &exp.stream;
    ctx.source_test = &exp.source_data.test;
    ctx.seed = cfg.seed;
    ctx.metrics = cfg.metrics;
    return ctx;
}

}  // namespace vida
