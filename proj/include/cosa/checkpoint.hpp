#pragma once

#include "cosa/subspace.hpp"
#include "cosa/train.hpp"

#include <json.hpp>

#include <filesystem>

namespace cosa {

// Structured-text checkpoints: {format: "cosa-ckpt", version: 1, kind, ...}. Parameter
// arrays are stored row-major as decimal doubles that round-trip exactly.
inline constexpr int kCheckpointVersion = 1;

nlohmann::json to_json(const nn::AutoEncoder& ae);
nlohmann::json to_json(const nn::Classifier& clf);
nlohmann::json to_json(const DictionarySet& dicts);

nn::AutoEncoder autoencoder_from_json(const nlohmann::json& j);
nn::Classifier classifier_from_json(const nlohmann::json& j);
DictionarySet dictionaries_from_json(const nlohmann::json& j);

void save_autoencoder(const std::filesystem::path& path, const nn::AutoEncoder& ae);
void save_classifier(const std::filesystem::path& path, const nn::Classifier& clf);
void save_dictionaries(const std::filesystem::path& path, const DictionarySet& dicts);

nn::AutoEncoder load_autoencoder(const std::filesystem::path& path);
nn::Classifier load_classifier(const std::filesystem::path& path);
DictionarySet load_dictionaries(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace cosa
