#pragma once
// CSV reports (reals as %.6g, one newline-terminated row per record) and
// their JSON sidecars.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "vida/pretrain.hpp"
#include "vida/protocols.hpp"

namespace vida {

std::string format_real(double v);

std::string run_report_csv(const RunReport& r);
nlohmann::json run_report_json(const RunReport& r);

std::string dg_report_csv(const DgReport& r);
nlohmann::json dg_report_json(const DgReport& r);

std::string ablation_csv(const AblationTable& t);
nlohmann::json ablation_json(const AblationTable& t);

std::string pretrain_csv(const PretrainResult& r);

// Writes `text` to `path`, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace vida
