#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sylcount/corpus.hpp"
#include "sylcount/random.hpp"
#include "sylcount/wav.hpp"

namespace sylcount {

// Synthetic corpus of vowel-like amplitude bursts. Each burst is a harmonic
// complex shaped by the speaker's formant resonances under a raised-cosine
// envelope; the syllable count of an utterance is its number of bursts.
struct SynthConfig {
  std::string name = "synth";
  int n_utterances = 200;
  int min_count = 1;
  int max_count = 12;
  int n_speakers = 4;
  std::string speaker_prefix = "spk";
  double burst_min_ms = 80.0;
  double burst_max_ms = 250.0;
  double gap_min_ms = 30.0;
  double gap_max_ms = 150.0;
  double edge_silence_ms = 100.0;
  // Additive white noise relative to the speech RMS; none when unset.
  std::optional<double> snr_db;
  // Always-present background floor relative to full scale.
  double noise_floor_db = -60.0;
  // Multiplies every speaker's formant frequencies (domain shift knob).
  double formant_scale = 1.0;
  double f0_min_hz = 90.0;
  double f0_max_hz = 250.0;
  int sample_rate = 16000;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

struct SpeakerProfile {
  std::string id;
  double f0_hz = 120.0;
  std::vector<double> formants_hz;
  std::vector<double> bandwidths_hz;
};

SpeakerProfile make_speaker(const SynthConfig& config, int index);

// One utterance with exactly `count` bursts; burst onsets (in samples) are
// appended to `onsets` when provided.
Waveform synthesize_utterance(int count, const SpeakerProfile& speaker, const SynthConfig& config,
                              Rng& rng, std::vector<std::size_t>* onsets = nullptr);

// Writes <out_dir>/audio/<id>.wav and <out_dir>/manifest.jsonl; returns the
// manifest (with durations filled in). Byte-identical output for a seed.
CorpusManifest synthesize_corpus(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace sylcount
