#pragma once

// JSON checkpoint container: architecture descriptor, vocabulary and every
// parameter tensor. Values are written with round-trip precision, so a
// loaded model reproduces forward outputs bit-exactly.

#include <string>

#include "json.hpp"
#include "shrdlurn/nn/model.hpp"

namespace shrdlurn::nn {

nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

template <typename T>
nlohmann::json model_to_json(const Model<T>& model);
/// Throws std::runtime_error on a malformed or mismatched container.
template <typename T>
Model<T> model_from_json(const nlohmann::json& j);

template <typename T>
void save_checkpoint(const Model<T>& model, const std::string& path);
template <typename T>
Model<T> load_checkpoint(const std::string& path);

}  // namespace shrdlurn::nn
