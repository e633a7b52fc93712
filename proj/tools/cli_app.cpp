#include "cli_app.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "vida/errors.hpp"
#include "vida/harness_config.hpp"
#include "vida/report.hpp"
#include "vida/weights_io.hpp"

namespace vida {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Overrides {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> dl, dh;
    std::optional<std::string> hka_mode;
    std::optional<std::size_t> hka_m;
    std::optional<double> hka_theta, dropout_rate, alpha, lr;
    std::optional<std::size_t> rounds, adapt_domains;
    std::optional<std::string> method, checkpoint, weights;
    std::optional<double> lambda_h, lambda_l;
    std::optional<std::string> variants;
};

void add_shared(CLI::App* app, Overrides& o) {
    app->add_option("--config", o.config, "JSON config file (flags override it)");
    app->add_option("--seed", o.seed, "Seed for data, initialisation and adaptation");
    app->add_option("--out", o.out, "Output directory");
    app->add_option("--dl", o.dl, "Low-rank branch width");
    app->add_option("--dh", o.dh, "High-rank branch width");
    app->add_option("--hka-mode", o.hka_mode, "Scale allotment: normal, inverted or fixed")
        ->check(CLI::IsMember({"normal", "inverted", "fixed"}));
    app->add_option("--hka-m", o.hka_m, "MC-dropout passes");
    app->add_option("--hka-theta", o.hka_theta, "Uncertainty threshold");
    app->add_option("--dropout-rate", o.dropout_rate, "MC-dropout rate");
    app->add_option("--alpha", o.alpha, "Teacher EMA momentum");
    app->add_option("--lr", o.lr, "Adapter learning rate");
    app->add_option("--rounds", o.rounds, "Passes over the domain sequence");
    app->add_option("--adapt-domains", o.adapt_domains, "Domains adapted on before freezing (dg)");
    app->add_option("--method", o.method, "source, vida, or an ablation variant");
    app->add_option("--checkpoint", o.checkpoint, "Plain source weights; pre-trains in-process when absent");
    app->add_option("--weights", o.weights, "Weights document read by fold and metrics");
    app->add_option("--lambda-h", o.lambda_h, "Fixed high-rank scale");
    app->add_option("--lambda-l", o.lambda_l, "Fixed low-rank scale");
    app->add_option("--variants", o.variants, "Comma-separated ablation variants");
}

HarnessConfig resolve_config(const Overrides& o) {
    HarnessConfig c = o.config ? load_config(*o.config) : HarnessConfig{};
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.out = *o.out;
    if (o.dl) c.method.low_rank = *o.dl;
    if (o.dh) c.method.high_rank = *o.dh;
    if (o.hka_mode) c.method.hka.mode = parse_hka_mode(*o.hka_mode);
    if (o.hka_m) c.method.hka.passes = *o.hka_m;
    if (o.hka_theta) c.method.hka.threshold = *o.hka_theta;
    if (o.dropout_rate) c.method.hka.dropout_rate = *o.dropout_rate;
    if (o.alpha) c.method.alpha = *o.alpha;
    if (o.lr) c.method.lr = *o.lr;
    if (o.rounds) c.rounds = *o.rounds;
    if (o.adapt_domains) c.adapt_domains = *o.adapt_domains;
    if (o.method) c.method.variant = parse_variant(*o.method);
    if (o.checkpoint) c.checkpoint = *o.checkpoint;
    if (o.weights) c.weights = *o.weights;
    if (o.lambda_h) {
        c.method.hka.fixed_scales.high = *o.lambda_h;
        c.fold_scales.high = *o.lambda_h;
    }
    if (o.lambda_l) {
        c.method.hka.fixed_scales.low = *o.lambda_l;
        c.fold_scales.low = *o.lambda_l;
    }
    if (o.variants) {
        c.variants.clear();
        std::string rest = *o.variants;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            c.variants.push_back(parse_variant(rest.substr(0, comma)));
            rest = comma == std::string::npos ? std::string{} : rest.substr(comma + 1);
        }
    }
    c.method.hka.validate();
    return c;
}

json sidecar(const std::string& command, const HarnessConfig& cfg, json summary) {
    return json{{"command", command}, {"config", to_json(cfg)}, {"summary", std::move(summary)}};
}

void cmd_pretrain(const HarnessConfig& cfg) {
    const DomainStream stream = generate_stream(cfg.stream, cfg.seed);
    const SourceData data = generate_source_data(stream.source, cfg.train_size, cfg.test_size, cfg.seed);
    const PretrainResult r = pretrain_for(cfg, data);
    const fs::path out = cfg.out;
    save_weights(r.model, out / "source.weights.json");
    write_text(out / "report.csv", pretrain_csv(r));
    write_json(out / "report.json",
               sidecar("pretrain", cfg,
                       {{"train_error", r.train_error}, {"source_test_error", evaluate_error(r.model, data.test)}}));
}

void cmd_run(const std::string& command, const HarnessConfig& cfg, std::size_t rounds) {
    const Experiment exp = prepare_experiment(cfg);
    TeacherStudent ts;
    const RunReport r = run_multiround(make_context(exp, cfg), cfg.method, rounds, &ts);
    const fs::path out = cfg.out;
    if (exp.pretrained) save_weights(exp.source, out / "source.weights.json");
    if (r.method != "source") {
        save_weights(ts.student, out / "student.weights.json");
        save_weights(ts.teacher, out / "teacher.weights.json");
    }
    write_text(out / "report.csv", run_report_csv(r));
    json summary = run_report_json(r);
    summary["source_test_error"] = exp.source_test_error;
    write_json(out / "report.json", sidecar(command, cfg, std::move(summary)));
}

void cmd_dg(const HarnessConfig& cfg) {
    const Experiment exp = prepare_experiment(cfg);
    const std::size_t k = cfg.resolved_adapt_domains(exp.stream.domains.size());
    const DgReport r = run_dg(make_context(exp, cfg), cfg.method, k);
    const fs::path out = cfg.out;
    write_text(out / "report.csv", dg_report_csv(r));
    write_json(out / "report.json", sidecar("dg", cfg, dg_report_json(r)));
}

void cmd_ablate(const HarnessConfig& cfg) {
    const Experiment exp = prepare_experiment(cfg);
    const AblationTable t = run_ablation(make_context(exp, cfg), cfg.method, cfg.variants);
    const fs::path out = cfg.out;
    write_text(out / "report.csv", ablation_csv(t));
    write_json(out / "report.json", sidecar("ablate", cfg, ablation_json(t)));
}

void cmd_fold(const HarnessConfig& cfg) {
    if (cfg.weights.empty()) throw ParameterError("fold needs --weights <adapted weights document>");
    const AdaptedModel adapted = load_adapted_weights(cfg.weights);
    const MlpModel folded = adapted.fold(cfg.fold_scales);
    const fs::path out = cfg.out;
    save_weights(folded, out / "folded.weights.json");

    std::string csv = "layer,d_in,d_out,low_rank,high_rank,max_abs_weight_delta\n";
    for (std::size_t i = 0; i < adapted.layer_count(); ++i) {
        const AdaptedLayer& l = adapted.layer(i);
        csv += std::to_string(i) + ',' + std::to_string(l.vida().in_features()) + ',' +
               std::to_string(l.vida().out_features()) + ',' + std::to_string(l.vida().low_rank()) + ',' +
               std::to_string(l.vida().high_rank()) + ',' +
               format_real(max_abs_diff(folded.layers[i].weight, l.base().weight)) + '\n';
    }
    write_text(out / "report.csv", csv);

    Rng rng = make_rng(cfg.seed, "fold-probe");
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor2D probe(64, adapted.input_dim());
    for (double& v : probe.values()) v = normal(rng);
    const std::vector<ScalePair> scales{cfg.fold_scales};
    const double diff = max_abs_diff(adapted.evaluate(probe, scales), mlp_logits(folded, probe));
    write_json(out / "report.json", sidecar("fold", cfg,
                                            {{"lambda_h", cfg.fold_scales.high},
                                             {"lambda_l", cfg.fold_scales.low},
                                             {"probe_rows", probe.rows()},
                                             {"max_abs_output_diff", diff}}));
}

void cmd_metrics(HarnessConfig cfg) {
    if (cfg.weights.empty()) throw ParameterError("metrics needs --weights <weights document>");
    LoadedModel loaded = load_weights(cfg.weights);
    Experiment exp;
    exp.stream = generate_stream(cfg.stream, cfg.seed);
    exp.source_data = generate_source_data(exp.stream.source, cfg.train_size, cfg.test_size, cfg.seed);
    const bool adapted = std::holds_alternative<AdaptedModel>(loaded);
    exp.source = adapted ? std::get<AdaptedModel>(loaded).fold(cfg.fold_scales) : std::get<MlpModel>(loaded);
    exp.source_test_error = evaluate_error(exp.source, exp.source_data.test);
    cfg.method.variant = Variant::source;
    cfg.metrics.enabled = true;
    const RunReport r = run_ctta(make_context(exp, cfg), cfg.method);
    const fs::path out = cfg.out;
    write_text(out / "report.csv", run_report_csv(r));
    json summary = run_report_json(r);
    summary["protocol"] = "metrics";
    summary["weights_kind"] = adapted ? "adapted (folded for evaluation)" : "plain";
    summary["source_test_error"] = exp.source_test_error;
    write_json(out / "report.json", sidecar("metrics", cfg, std::move(summary)));
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Continual test-time adaptation with low/high-rank adapters on synthetic shift streams"};
    app.require_subcommand(1);
    Overrides o;
    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {
        {"pretrain", "Train the plain source model and save it"},
        {"adapt", "One online pass over the target domains"},
        {"multiround", "Repeat the domain sequence --rounds times with persistent adapters"},
        {"dg", "Adapt on the first K domains, then score the rest frozen"},
        {"ablate", "Run every adapter/allotment variant on the same stream"},
        {"fold", "Fold adapter branches into plain weights"},
        {"metrics", "Per-domain error, JS divergence and intra-class divergence of a model"},
    };
    for (const Sub& s : subs) add_shared(app.add_subcommand(s.name, s.help), o);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    if (!rev.empty()) rev.pop_back();
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const HarnessConfig cfg = resolve_config(o);
        const std::string name = app.get_subcommands().front()->get_name();
        if (name == "pretrain") cmd_pretrain(cfg);
        else if (name == "adapt") cmd_run(name, cfg, 1);
        else if (name == "multiround") cmd_run(name, cfg, cfg.rounds);
        else if (name == "dg") cmd_dg(cfg);
        else if (name == "ablate") cmd_ablate(cfg);
        else if (name == "fold") cmd_fold(cfg);
        else if (name == "metrics") cmd_metrics(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace vida
