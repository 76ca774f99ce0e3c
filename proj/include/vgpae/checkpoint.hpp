#pragma once

#include "vgpae/trainer.hpp"

#include <json.hpp>

#include <filesystem>

namespace vgpae {

/// Self-describing JSON archive of a ModelState. Doubles are written with
/// shortest round-trip formatting, so save/load is bit-exact.
nlohmann::json to_json(const ModelState& state);
ModelState model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainConfig& cfg);
/// Overlays the keys present in `j` onto `cfg`.
void merge_train_config(const nlohmann::json& j, TrainConfig& cfg);

void save_checkpoint(const std::filesystem::path& path, const ModelState& state,
                     const TrainConfig& cfg);
ModelState load_checkpoint(const std::filesystem::path& path,
                           TrainConfig* cfg = nullptr);

}  // namespace vgpae
