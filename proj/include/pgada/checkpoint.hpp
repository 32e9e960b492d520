#pragma once

#include <filesystem>

#include <json.hpp>

#include "pgada/diffnet.hpp"

namespace pgada {

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const char* what);

// Shapes, activation tags, flattened parameters and hyperparameters. Doubles
// are written in shortest round-trip form, so save/load is bit-exact.
nlohmann::json model_to_json(const ModelStack& m);
ModelStack model_from_json(const nlohmann::json& j);

// The checkpoint document holds the model under "model" plus an optional
// free-form "state" object (training progress, config echo).
void save_checkpoint(const std::filesystem::path& path, const ModelStack& m,
                     const nlohmann::json& state = nlohmann::json::object());
ModelStack load_checkpoint(const std::filesystem::path& path, nlohmann::json* state = nullptr);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace pgada
