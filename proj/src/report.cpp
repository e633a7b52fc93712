#include "vida/report.hpp"

#include <cstdio>
#include <fstream>

#include "vida/errors.hpp"

namespace vida {

using nlohmann::json;

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string run_report_csv(const RunReport& r) {
    std::string out =
        "round,domain_index,name,kind,severity,error,teacher_error,source_error,js_prev_domain,"
        "mean_intra_class_divergence\n";
    for (const DomainRow& row : r.rows) {
        out += std::to_string(row.round) + ',' + std::to_string(row.index) + ',' + row.name + ',' +
               std::string(to_string(row.kind)) + ',' + format_real(row.severity) + ',' + format_real(row.error) +
               ',' + format_real(row.teacher_error) + ',' + format_real(row.source_error) + ',' +
               format_real(row.js_prev_domain) + ',' + format_real(row.mean_intra_class_divergence) + '\n';
    }
    return out;
}

json run_report_json(const RunReport& r) {
    json j;
    j["protocol"] = r.protocol;
    j["method"] = r.method;
    j["seed"] = r.seed;
    j["scoring"] = "pre-update student; teacher logged on the same batch";
    j["domains_per_round"] = r.round_means.empty() ? 0 : r.rows.size() / r.round_means.size();
    j["round_means"] = r.round_means;
    j["mean_error"] = r.mean_error;
    j["mean_teacher_error"] = r.mean_teacher_error;
    j["source_mean_error"] = r.source_mean_error;
    j["gain"] = r.gain;
    return j;
}

std::string dg_report_csv(const DgReport& r) {
    std::string out = "domain_index,name,adapted_on,adapted_error,source_error\n";
    for (const DgRow& row : r.rows) {
        out += std::to_string(row.index) + ',' + row.name + ',' + (row.adapted_on ? "1" : "0") + ',' +
               format_real(row.adapted_error) + ',' + format_real(row.source_error) + '\n';
    }
    return out;
}

json dg_report_json(const DgReport& r) {
    json j;
    j["protocol"] = "dg";
    j["seed"] = r.seed;
    j["adapt_domains"] = r.adapt_domains;
    j["unseen_mean_adapted"] = r.unseen_mean_adapted;
    j["unseen_mean_source"] = r.unseen_mean_source;
    j["checksum_after_adapt"] = r.checksum_after_adapt;
    j["checksum_after_unseen"] = r.checksum_after_unseen;
    return j;
}

std::string ablation_csv(const AblationTable& t) {
    std::string out = "variant";
    for (const auto& name : t.domain_names) out += ',' + name;
    out += ",mean_error,gain\n";
    for (const AblationRow& row : t.rows) {
        out += std::string(to_string(row.variant));
        for (double e : row.domain_errors) out += ',' + format_real(e);
        out += ',' + format_real(row.mean_error) + ',' + format_real(row.gain) + '\n';
    }
    return out;
}

json ablation_json(const AblationTable& t) {
    json j;
    j["protocol"] = "ablation";
    j["seed"] = t.seed;
    j["domains"] = t.domain_names;
    json rows = json::array();
    for (const AblationRow& row : t.rows) {
        rows.push_back({{"variant", std::string(to_string(row.variant))},
                        {"mean_error", row.mean_error},
                        {"gain", row.gain}});
    }
    j["rows"] = std::move(rows);
    return j;
}

std::string pretrain_csv(const PretrainResult& r) {
    std::string out = "epoch,loss\n";
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
        out += std::to_string(e) + ',' + format_real(r.epoch_loss[e]) + '\n';
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StateError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw StateError("write failed for '" + path.string() + "'");
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace vida
