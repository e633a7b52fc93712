#pragma once
// Weights document: JSON with one entry per parameter buffer,
//
//   {"format": "vida-weights", "version": 1,
//    "entries": [{"name": "layers.0.weight", "shape": [64, 16], "values": [...]}, ...]}
//
// Entries are ordered layer by layer; within a layer: weight, bias, low_down,
// low_up, high_up, high_down. Plain (or folded) models omit the adapter entries.
// Doubles are written in shortest round-trip form, so save/load is bit-exact.

#include <filesystem>
#include <string>
#include <variant>

#include "vida/nn.hpp"
#include "vida/vida_adapter.hpp"

namespace vida {

using LoadedModel = std::variant<MlpModel, AdaptedModel>;

std::string weights_to_string(const MlpModel& model);
std::string weights_to_string(const AdaptedModel& model);

// Throws ParseError naming the offending entry and its position.
LoadedModel weights_from_string(const std::string& text);

void save_weights(const MlpModel& model, const std::filesystem::path& path);
void save_weights(const AdaptedModel& model, const std::filesystem::path& path);
LoadedModel load_weights(const std::filesystem::path& path);

// Adapter entries, if present, are rejected.
MlpModel load_plain_weights(const std::filesystem::path& path);
// Throws ParseError when the document carries no adapters.
AdaptedModel load_adapted_weights(const std::filesystem::path& path);

}  // namespace vida
