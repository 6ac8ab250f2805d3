#pragma once

#include <filesystem>
#include <memory>

#include "sylcount/features.hpp"
#include "sylcount/model.hpp"

namespace sylcount {

struct LoadedModel {
  std::unique_ptr<CountModel> model;
  FeatureConfig features;
};

// Writes `path` (tensor archive) and `path` + ".json" (model kind, model
// configuration, feature configuration including the normalization choice).
void save_checkpoint(const std::filesystem::path& path, const CountModel& model,
                     const FeatureConfig& features);

// Rebuilds the model from the sidecar and loads every tensor, validating
// shapes against the configuration.
LoadedModel load_checkpoint(const std::filesystem::path& path);

// Constructs an untrained model of the given kind from its JSON configuration.
std::unique_ptr<CountModel> make_model(const std::string& kind, const nlohmann::json& config,
                                       std::uint64_t seed);

}  // namespace sylcount
