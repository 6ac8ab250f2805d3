#include "sylcount/checkpoint.hpp"

#include <fstream>

#include "sylcount/blstm.hpp"
#include "sylcount/error.hpp"
#include "sylcount/sylnet.hpp"

namespace sylcount {

using nlohmann::json;

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return path.string() + ".json";
}

}  // namespace

std::unique_ptr<CountModel> make_model(const std::string& kind, const json& config,
                                       std::uint64_t seed) {
  if (kind == "sylnet") return std::make_unique<SylNet>(SylNetConfig::from_json(config), seed);
  if (kind == "blstm_count")
    return std::make_unique<BlstmCount>(BlstmCountConfig::from_json(config), seed);
  throw DataError("unknown model kind '" + kind + "'");
}

void save_checkpoint(const std::filesystem::path& path, const CountModel& model,
                     const FeatureConfig& features) {
  write_tensor_archive(path, model.params());
  const json sidecar = {{"format", "sylcount-checkpoint-1"},
                        {"model_kind", model.kind()},
                        {"model_config", model.config_json()},
                        {"feature_config", features.to_json()},
                        {"normalization", features.normalize ? "per_utterance_mvn" : "none"},
                        {"tensor_archive", path.filename().string()}};
  std::ofstream out(sidecar_path(path));
  if (!out) throw DataError("cannot write checkpoint sidecar for '" + path.string() + "'");
  out << sidecar.dump(2) << '\n';
}

LoadedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(sidecar_path(path));
  if (!in) throw DataError("cannot open checkpoint sidecar '" + sidecar_path(path).string() + "'");
  json sidecar;
  try {
    sidecar = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint sidecar '" + sidecar_path(path).string() + "': " + e.what());
  }
  if (sidecar.value("format", "") != "sylcount-checkpoint-1")
    throw DataError("'" + sidecar_path(path).string() + "' is not a checkpoint sidecar");
  LoadedModel loaded;
  loaded.features = FeatureConfig::from_json(sidecar.at("feature_config"));
  loaded.model = make_model(sidecar.at("model_kind").get<std::string>(), sidecar.at("model_config"), 0);
  if (loaded.model->input_dim() != loaded.features.n_mels)
    throw DataError("checkpoint '" + path.string() + "': model input width " +
                    std::to_string(loaded.model->input_dim()) + " does not match n_mels " +
                    std::to_string(loaded.features.n_mels));
  read_tensor_archive(path, loaded.model->params());
  return loaded;
}

}  // namespace sylcount
