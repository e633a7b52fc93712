#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "vida/errors.hpp"
#include "vida/harness_config.hpp"
#include "vida/protocols.hpp"
#include "vida/weights_io.hpp"

using namespace vida;
namespace fs = std::filesystem;

namespace {

HarnessConfig small_config(std::uint64_t seed = 3) {
    HarnessConfig cfg;
    cfg.seed = seed;
    cfg.stream.dim = 8;
    cfg.stream.class_count = 3;
    cfg.stream.domain_count = 4;
    cfg.stream.batches_per_domain = 6;
    cfg.stream.batch_size = 16;
    cfg.train_size = 768;
    cfg.test_size = 300;
    cfg.pretrain.hidden = {32};
    cfg.pretrain.epochs = 8;
    cfg.method.high_rank = 32;
    cfg.metrics.bins = 50;
    return cfg;
}

std::vector<DomainSpec> zero_schedule(std::size_t n) {
    std::vector<DomainSpec> s(n);
    for (std::size_t i = 0; i < n; ++i) {
        s[i].kind = CorruptionKind::additive_noise;
        s[i].severity = 0.0;
        s[i].seed = i + 1;
        s[i].name = "clean" + std::to_string(i);
    }
    return s;
}

fs::path temp_dir(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("vida_harness_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("stream generation") {
    const StreamConfig cfg = small_config().stream;
    const DomainStream a = generate_stream(cfg, 11);
    const DomainStream b = generate_stream(cfg, 11);
    REQUIRE(a.domains.size() == 4);
    for (std::size_t d = 0; d < a.domains.size(); ++d) {
        REQUIRE(a.domains[d].batches.size() == cfg.batches_per_domain);
        for (std::size_t k = 0; k < a.domains[d].batches.size(); ++k) {
            CHECK(a.domains[d].batches[k].inputs == b.domains[d].batches[k].inputs);
            CHECK(a.domains[d].batches[k].labels == b.domains[d].batches[k].labels);
            CHECK(a.domains[d].batches[k].inputs.rows() == cfg.batch_size);
        }
    }
    CHECK(!(generate_stream(cfg, 12).domains[0].batches[0].inputs == a.domains[0].batches[0].inputs));

    StreamConfig bad = cfg;
    bad.class_count = 1;
    CHECK_THROWS_AS(generate_stream(bad, 1), ParameterError);
}

TEST_CASE("zero-severity corruptions leave the source distribution untouched") {
    Rng rng(1);
    const SourceSpec src = make_source(3, 5, 3.0, 1.0, rng, 2.0);
    Rng draw(2);
    const LabeledBatch batch = sample_source(src, 40, draw);
    for (CorruptionKind k :
         {CorruptionKind::additive_noise, CorruptionKind::rotation, CorruptionKind::scale, CorruptionKind::mean_shift}) {
        DomainSpec spec;
        spec.kind = k;
        spec.severity = 0.0;
        spec.seed = 4;
        Rng noise(3);
        CHECK(max_abs_diff(apply_corruption(spec, batch.inputs, noise), batch.inputs) <= 1e-12);
    }
}

TEST_CASE("rotation by pi in 2-D swaps antipodal classes") {
    HarnessConfig cfg = small_config(5);
    cfg.stream.dim = 2;
    cfg.stream.class_count = 2;
    cfg.stream.offset = 0.0;
    cfg.stream.radius = 3.0;
    DomainSpec rot;
    rot.kind = CorruptionKind::rotation;
    rot.severity = std::numbers::pi;
    rot.seed = 1;
    rot.name = "flip";
    cfg.stream.schedule = {rot};
    cfg.stream.domain_count = 1;
    cfg.stream.batches_per_domain = 20;
    cfg.method.high_rank = 32;
    const Experiment exp = prepare_experiment(cfg);
    // Two classes on a line through the origin: a half-turn maps each mean onto the other.
    const double flipped = frozen_domain_errors(exp.source, exp.stream)[0];
    CHECK(std::abs(flipped - (1.0 - exp.source_test_error)) < 0.06);
    CHECK(flipped > 0.85);
}

TEST_CASE("pretraining") {
    SUBCASE("separable toy set") {
        HarnessConfig cfg = small_config(2);
        cfg.stream.class_count = 2;
        cfg.stream.radius = 4.0;
        cfg.stream.spread = 0.5;
        const Experiment exp = prepare_experiment(cfg);
        CHECK(exp.pretrain.train_error < 0.05);
        CHECK(exp.source_test_error < 0.05);
    }
    SUBCASE("zero epochs returns the initialisation") {
        HarnessConfig cfg = small_config();
        cfg.pretrain.epochs = 0;
        const Experiment exp = prepare_experiment(cfg);
        Rng init = make_rng(cfg.seed, "pretrain-init");
        std::vector<std::size_t> widths{cfg.stream.dim};
        widths.insert(widths.end(), cfg.pretrain.hidden.begin(), cfg.pretrain.hidden.end());
        widths.push_back(cfg.stream.class_count);
        const MlpModel fresh = make_mlp(widths, init);
        for (std::size_t i = 0; i < fresh.layers.size(); ++i) CHECK(fresh.layers[i].weight == exp.source.layers[i].weight);
    }
    SUBCASE("same seed, same checkpoint") {
        const Experiment a = prepare_experiment(small_config());
        const Experiment b = prepare_experiment(small_config());
        CHECK(weights_to_string(a.source) == weights_to_string(b.source));
    }
}

TEST_CASE("weights persistence") {
    const Experiment exp = prepare_experiment(small_config());
    const fs::path dir = temp_dir("weights");
    Rng rng(4);
    const AdaptedModel adapted = attach_adapters(exp.source, 1, 32, AdapterInit::gaussian, 0.1, rng);

    save_weights(adapted, dir / "a.json");
    const std::string first = slurp(dir / "a.json");
    const AdaptedModel back = load_adapted_weights(dir / "a.json");
    save_weights(back, dir / "b.json");
    CHECK(first == slurp(dir / "b.json"));

    save_weights(exp.source, dir / "plain.json");
    const MlpModel plain = load_plain_weights(dir / "plain.json");
    save_weights(plain, dir / "plain2.json");
    CHECK(slurp(dir / "plain.json") == slurp(dir / "plain2.json"));

    save_weights(adapted.fold({1.3, 0.7}), dir / "folded.json");
    CHECK(std::holds_alternative<MlpModel>(load_weights(dir / "folded.json")));
    CHECK_THROWS_AS(load_adapted_weights(dir / "folded.json"), ParseError);

    const std::string text = first.substr(0, first.size() / 2);
    std::ofstream(dir / "cut.json", std::ios::binary) << text;
    CHECK_THROWS_AS(load_weights(dir / "cut.json"), ParseError);

    nlohmann::json doc = nlohmann::json::parse(first);
    doc["entries"][3]["values"].erase(0);
    try {
        weights_from_string(doc.dump());
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("layers.0.low_up") != std::string::npos);
        CHECK(std::string(e.what()).find("#3") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("protocols") {
    const HarnessConfig cfg = small_config();
    const Experiment exp = prepare_experiment(cfg);
    const ExperimentContext ctx = make_context(exp, cfg);

    SUBCASE("report mean is the arithmetic mean of its rows") {
        const RunReport r = run_ctta(ctx, cfg.method);
        double s = 0.0;
        for (const DomainRow& row : r.rows) s += row.error;
        CHECK(std::abs(r.mean_error - s / static_cast<double>(r.rows.size())) <= 1e-12);
        CHECK(std::abs(r.gain - (r.source_mean_error - r.mean_error)) <= 1e-12);
        for (const DomainRow& row : r.rows) {
            CHECK(row.js_prev_domain >= 0.0);
            CHECK(row.js_prev_domain <= std::log(2.0) + 1e-12);
        }
    }
    SUBCASE("source method equals frozen evaluation") {
        MethodConfig m = cfg.method;
        m.variant = Variant::source;
        const RunReport r = run_ctta(ctx, m);
        const std::vector<double> frozen = frozen_domain_errors(exp.source, exp.stream);
        for (std::size_t d = 0; d < frozen.size(); ++d) CHECK(r.rows[d].error == frozen[d]);
        const RunReport mr = run_multiround(ctx, m, 3);
        REQUIRE(mr.round_means.size() == 3);
        CHECK(mr.round_means[0] == mr.round_means[1]);
        CHECK(mr.round_means[1] == mr.round_means[2]);
    }
    SUBCASE("one round equals a single pass") {
        const RunReport a = run_ctta(ctx, cfg.method);
        const RunReport b = run_multiround(ctx, cfg.method, 1);
        REQUIRE(a.rows.size() == b.rows.size());
        for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].error == b.rows[i].error);
        CHECK(a.mean_error == b.mean_error);
        CHECK_THROWS_AS(run_multiround(ctx, cfg.method, 0), ParameterError);
    }
    SUBCASE("fixed unit scales equal HKA without dropout") {
        MethodConfig m = cfg.method;
        m.hka.dropout_rate = 0.0;
        const std::vector<Variant> v{Variant::both_fixed, Variant::both_hka};
        const AblationTable t = run_ablation(ctx, m, v);
        REQUIRE(t.rows.size() == 2);
        CHECK(t.rows[0].domain_errors == t.rows[1].domain_errors);
        const std::vector<Variant> only_source{Variant::source};
        const AblationTable s = run_ablation(ctx, m, only_source);
        CHECK(s.rows[0].domain_errors == frozen_domain_errors(exp.source, exp.stream));
    }
    SUBCASE("generalisation protocol") {
        const DgReport r = run_dg(ctx, cfg.method, 2);
        CHECK(r.rows.size() == 4);
        CHECK(r.checksum_after_adapt == r.checksum_after_unseen);
        CHECK(r.rows[0].adapted_on);
        CHECK(!r.rows[3].adapted_on);
        CHECK_THROWS_AS(run_dg(ctx, cfg.method, 0), ParameterError);
        CHECK_THROWS_AS(run_dg(ctx, cfg.method, 4), ParameterError);
        const DgReport again = run_dg(ctx, cfg.method, 2);
        CHECK(again.unseen_mean_adapted == r.unseen_mean_adapted);
    }
}

TEST_CASE("clean stream adaptation stays near the source error") {
    HarnessConfig cfg = small_config(4);
    cfg.stream.schedule = zero_schedule(3);
    cfg.stream.domain_count = 3;
    cfg.stream.batches_per_domain = 15;
    const Experiment exp = prepare_experiment(cfg);
    const ExperimentContext ctx = make_context(exp, cfg);
    const RunReport r = run_ctta(ctx, cfg.method);
    CHECK(std::abs(r.mean_error - exp.source_test_error) < 0.05);
    const DgReport dg = run_dg(ctx, cfg.method, 2);
    CHECK(std::abs(dg.unseen_mean_adapted - dg.unseen_mean_source) < 0.05);
}

TEST_CASE("config documents") {
    HarnessConfig cfg = small_config();
    HarnessConfig copy;
    apply_json(copy, to_json(cfg));
    CHECK(to_json(copy) == to_json(cfg));

    HarnessConfig target;
    CHECK_THROWS_AS(apply_json(target, nlohmann::json{{"sead", 3}}), ParseError);
    CHECK_THROWS_AS(apply_json(target, nlohmann::json{{"seed", "three"}}), ParseError);
    apply_json(target, nlohmann::json{{"hka-mode", "inverted"}, {"dl", 2}});
    CHECK(target.method.hka.mode == HkaMode::inverted);
    CHECK(target.method.low_rank == 2);

    const fs::path dir = temp_dir("config");
    std::ofstream(dir / "broken.json") << "{\"seed\": 3,";
    CHECK_THROWS_AS(load_config(dir / "broken.json"), ParseError);
    fs::remove_all(dir);
    CHECK(cfg.resolved_adapt_domains(8) == 4);
}
