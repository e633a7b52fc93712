#include "vida/weights_io.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "vida/errors.hpp"

namespace vida {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "vida-weights";
constexpr int kVersion = 1;

json entry(const std::string& name, std::size_t rows, std::size_t cols, std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw ParameterError("refusing to save non-finite value in '" + name + "'");
    }
    return json{{"name", name}, {"shape", {rows, cols}}, {"values", std::vector<double>(values.begin(), values.end())}};
}

json tensor_entry(const std::string& name, const Tensor2D& t) { return entry(name, t.rows(), t.cols(), t.values()); }

// One entry per line keeps the files diffable without inflating them.
std::string document(const json& entries) {
    std::string out = "{\"format\":\"" + std::string(kFormat) + "\",\"version\":" + std::to_string(kVersion) +
                      ",\"entries\":[\n";
    for (std::size_t i = 0; i < entries.size(); ++i) {
        out += entries[i].dump();
        out += i + 1 < entries.size() ? ",\n" : "\n";
    }
    out += "]}\n";
    return out;
}

void append_base(json& entries, std::size_t i, const LinearLayer& l) {
    const std::string prefix = "layers." + std::to_string(i) + ".";
    entries.push_back(tensor_entry(prefix + "weight", l.weight));
    entries.push_back(entry(prefix + "bias", 1, l.bias.size(), l.bias));
}

struct RawEntry {
    std::size_t position = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
};

[[noreturn]] void fail(const std::string& name, std::size_t position, const std::string& why) {
    throw ParseError("weights entry '" + name + "' (#" + std::to_string(position) + "): " + why);
}

RawEntry parse_entry(const json& e, std::size_t position, std::string& name) {
    if (!e.is_object()) fail("?", position, "entry is not an object");
    if (!e.contains("name") || !e["name"].is_string()) fail("?", position, "missing name");
    name = e["name"].get<std::string>();
    if (!e.contains("shape") || !e["shape"].is_array() || e["shape"].size() != 2 ||
        !e["shape"][0].is_number_unsigned() || !e["shape"][1].is_number_unsigned()) {
        fail(name, position, "shape must be [rows, cols]");
    }
    RawEntry raw;
    raw.position = position;
    raw.rows = e["shape"][0].get<std::size_t>();
    raw.cols = e["shape"][1].get<std::size_t>();
    if (!e.contains("values") || !e["values"].is_array()) fail(name, position, "missing values");
    const json& vals = e["values"];
    if (vals.size() != raw.rows * raw.cols) {
        fail(name, position,
             "expected " + std::to_string(raw.rows * raw.cols) + " values, found " + std::to_string(vals.size()));
    }
    raw.values.reserve(vals.size());
    for (std::size_t k = 0; k < vals.size(); ++k) {
        if (!vals[k].is_number()) fail(name, position, "value " + std::to_string(k) + " is not a number");
        raw.values.push_back(vals[k].get<double>());
    }
    return raw;
}

Tensor2D take_tensor(std::map<std::string, RawEntry>& entries, const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw ParseError("weights document lacks entry '" + name + "'");
    RawEntry raw = std::move(it->second);
    entries.erase(it);
    return Tensor2D(raw.rows, raw.cols, std::move(raw.values));
}

}  // namespace

std::string weights_to_string(const MlpModel& model) {
    json entries = json::array();
    for (std::size_t i = 0; i < model.layers.size(); ++i) append_base(entries, i, model.layers[i]);
    return document(entries);
}

std::string weights_to_string(const AdaptedModel& model) {
    json entries = json::array();
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        const AdaptedLayer& l = model.layer(i);
        append_base(entries, i, l.base());
        const std::string prefix = "layers." + std::to_string(i) + ".";
        entries.push_back(tensor_entry(prefix + "low_down", l.vida().low_down));
        entries.push_back(tensor_entry(prefix + "low_up", l.vida().low_up));
        entries.push_back(tensor_entry(prefix + "high_up", l.vida().high_up));
        entries.push_back(tensor_entry(prefix + "high_down", l.vida().high_down));
    }
    return document(entries);
}

LoadedModel weights_from_string(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError("weights document is not valid JSON at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    if (!doc.is_object() || doc.value("format", std::string{}) != kFormat) {
        throw ParseError("not a weights document (missing format tag)");
    }
    if (doc.value("version", 0) != kVersion) throw ParseError("unsupported weights document version");
    if (!doc.contains("entries") || !doc["entries"].is_array()) throw ParseError("weights document lacks entries");

    std::map<std::string, RawEntry> entries;
    std::size_t layer_count = 0;
    bool any_adapter = false;
    const json& list = doc["entries"];
    for (std::size_t i = 0; i < list.size(); ++i) {
        std::string name;
        RawEntry raw = parse_entry(list[i], i, name);
        // names look like layers.<index>.<kind>
        const auto first = name.find('.');
        const auto second = name.find('.', first + 1);
        if (name.rfind("layers.", 0) != 0 || second == std::string::npos) fail(name, i, "unrecognised entry name");
        std::size_t index = 0;
        try {
            index = std::stoul(name.substr(first + 1, second - first - 1));
        } catch (const std::exception&) {
            fail(name, i, "unrecognised layer index");
        }
        const std::string kind = name.substr(second + 1);
        if (kind != "weight" && kind != "bias" && kind != "low_down" && kind != "low_up" && kind != "high_up" &&
            kind != "high_down") {
            fail(name, i, "unknown parameter kind '" + kind + "'");
        }
        if (kind != "weight" && kind != "bias") any_adapter = true;
        layer_count = std::max(layer_count, index + 1);
        if (!entries.emplace(name, std::move(raw)).second) fail(name, i, "duplicate entry");
    }
    if (layer_count == 0) throw ParseError("weights document has no layers");

    MlpModel base;
    std::vector<ViDAPair> adapters;
    for (std::size_t i = 0; i < layer_count; ++i) {
        const std::string prefix = "layers." + std::to_string(i) + ".";
        Tensor2D weight = take_tensor(entries, prefix + "weight");
        Tensor2D bias = take_tensor(entries, prefix + "bias");
        if (bias.rows() != 1 || bias.cols() != weight.rows()) {
            throw ParseError("weights entry '" + prefix + "bias' has shape " + bias.shape_string() +
                             ", expected [1x" + std::to_string(weight.rows()) + "]");
        }
        base.layers.emplace_back(std::move(weight),
                                 std::vector<double>(bias.values().begin(), bias.values().end()));
        if (any_adapter) {
            ViDAPair v;
            v.low_down = take_tensor(entries, prefix + "low_down");
            v.low_up = take_tensor(entries, prefix + "low_up");
            v.high_up = take_tensor(entries, prefix + "high_up");
            v.high_down = take_tensor(entries, prefix + "high_down");
            v.low_down_grad = Tensor2D(v.low_down.rows(), v.low_down.cols());
            v.low_up_grad = Tensor2D(v.low_up.rows(), v.low_up.cols());
            v.high_up_grad = Tensor2D(v.high_up.rows(), v.high_up.cols());
            v.high_down_grad = Tensor2D(v.high_down.rows(), v.high_down.cols());
            try {
                v.validate();
            } catch (const ShapeError& e) {
                throw ParseError("layer " + std::to_string(i) + ": " + e.what());
            }
            adapters.push_back(std::move(v));
        }
    }
    try {
        base.validate();
    } catch (const std::exception& e) {
        throw ParseError(std::string("weights document describes an invalid model: ") + e.what());
    }
    if (!any_adapter) return base;
    std::vector<AdaptedLayer> layers;
    try {
        for (std::size_t i = 0; i < layer_count; ++i) layers.emplace_back(std::move(base.layers[i]), std::move(adapters[i]));
        return AdaptedModel(std::move(layers));
    } catch (const ShapeError& e) {
        throw ParseError(std::string("adapter shapes do not match the base layers: ") + e.what());
    }
}

namespace {

void write_document(const std::string& text, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StateError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw StateError("write failed for '" + path.string() + "'");
}

}  // namespace

void save_weights(const MlpModel& model, const std::filesystem::path& path) {
    write_document(weights_to_string(model), path);
}

void save_weights(const AdaptedModel& model, const std::filesystem::path& path) {
    write_document(weights_to_string(model), path);
}

LoadedModel load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open weights file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return weights_from_string(ss.str());
}

MlpModel load_plain_weights(const std::filesystem::path& path) {
    LoadedModel m = load_weights(path);
    if (auto* plain = std::get_if<MlpModel>(&m)) return std::move(*plain);
    throw ParseError("'" + path.string() + "' carries adapter entries; expected a plain model");
}

AdaptedModel load_adapted_weights(const std::filesystem::path& path) {
    LoadedModel m = load_weights(path);
    if (auto* adapted = std::get_if<AdaptedModel>(&m)) return std::move(*adapted);
    throw ParseError("'" + path.string() + "' has no adapter entries");
}

}  // namespace vida
