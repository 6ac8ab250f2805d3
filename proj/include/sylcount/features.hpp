#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "json.hpp"

#include "sylcount/wav.hpp"

namespace sylcount {

struct Utterance;

struct FeatureConfig {
  int sample_rate_hz = 16000;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 24;
  double fmin_hz = 50.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-10;
  // Per-utterance mean/variance normalization of model inputs.
  bool normalize = true;

  int window_samples() const;
  int hop_samples() const;
  // Throws UsageError when the invariants do not hold.
  void validate() const;
  // Stable identifier of everything that affects extract_features output.
  std::string cache_key() const;

  nlohmann::json to_json() const;
  static FeatureConfig from_json(const nlohmann::json& j);
};

// T x D log-Mel matrix, one row per frame.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  double frame_hop_ms = 10.0;
  std::string utterance_id;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

// Number of frames produced for `samples` input samples, or 0 when the
// input is shorter than one window.
std::size_t frame_count(std::size_t samples, const FeatureConfig& config);

// Hamming-windowed power spectrum -> triangular mel filterbank -> log(E + floor).
// The waveform must already be at config.sample_rate_hz.
FeatureMatrix extract_features(const Waveform& audio, const FeatureConfig& config);

// Applies the configured model-input normalization (identity when disabled).
FeatureMatrix normalize_features(FeatureMatrix features, const FeatureConfig& config);

struct CacheStats {
  std::atomic<std::size_t> computed{0};
  std::atomic<std::size_t> hits{0};
  std::atomic<std::size_t> repaired{0};
};

// Features for an utterance, persisted under cache_dir keyed by the audio
// content hash and FeatureConfig::cache_key(). Corrupt entries are
// recomputed and overwritten with a warning. Returns raw (unnormalized)
// features.
FeatureMatrix cached_extract(const Utterance& utterance, const FeatureConfig& config,
                             const std::filesystem::path& cache_dir, CacheStats* stats = nullptr);

// Serialization used by the cache; exposed for tests and the extract command.
void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& features);
FeatureMatrix read_feature_file(const std::filesystem::path& path);

}  // namespace sylcount
