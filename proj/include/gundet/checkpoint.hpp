#pragma once

#include <string>

#include "gundet/nn.hpp"

namespace gundet {

/// Named-tensor container (binary, little-endian doubles). The JSON sidecar
/// next to it carries model metadata and lives at `path` + ".json".
void save_tensors(const std::string& path, const nn::ParamMap& params);
nn::ParamMap load_tensors(const std::string& path);

std::string history_to_json(const nn::TrainingHistory& history);

std::string sidecar_path(const std::string& checkpoint_path);
void save_sidecar(const std::string& checkpoint_path, const std::string& json_text);
std::string load_sidecar(const std::string& checkpoint_path);

}  // namespace gundet
