#include "sylcount/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sylcount/error.hpp"

namespace sylcount {

void SynthConfig::validate() const {
  if (n_utterances < 1) throw UsageError("synth: n_utterances must be >= 1");
  if (min_count < 1 || max_count < min_count)
    throw UsageError("synth: require 1 <= min_count <= max_count");
  if (n_speakers < 1) throw UsageError("synth: n_speakers must be >= 1");
  if (!(burst_min_ms > 0.0) || burst_max_ms < burst_min_ms)
    throw UsageError("synth: invalid burst duration range");
  if (!(gap_min_ms >= 0.0) || gap_max_ms < gap_min_ms)
    throw UsageError("synth: invalid gap duration range");
  if (edge_silence_ms < 0.0) throw UsageError("synth: edge_silence_ms must be >= 0");
  if (!(formant_scale > 0.0)) throw UsageError("synth: formant_scale must be positive");
  if (!(f0_min_hz > 0.0) || f0_max_hz < f0_min_hz) throw UsageError("synth: invalid f0 range");
  if (sample_rate < 8000) throw UsageError("synth: sample_rate must be >= 8000");
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json j = {{"name", name},
                      {"n_utterances", n_utterances},
                      {"min_count", min_count},
                      {"max_count", max_count},
                      {"n_speakers", n_speakers},
                      {"speaker_prefix", speaker_prefix},
                      {"burst_min_ms", burst_min_ms},
                      {"burst_max_ms", burst_max_ms},
                      {"gap_min_ms", gap_min_ms},
                      {"gap_max_ms", gap_max_ms},
                      {"edge_silence_ms", edge_silence_ms},
                      {"noise_floor_db", noise_floor_db},
                      {"formant_scale", formant_scale},
                      {"f0_min_hz", f0_min_hz},
                      {"f0_max_hz", f0_max_hz},
                      {"sample_rate", sample_rate},
                      {"seed", seed}};
  j["snr_db"] = snr_db ? nlohmann::json(*snr_db) : nlohmann::json(nullptr);
  return j;
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.name = j.at("name").get<std::string>();
    c.n_utterances = j.at("n_utterances").get<int>();
    c.min_count = j.at("min_count").get<int>();
    c.max_count = j.at("max_count").get<int>();
    c.n_speakers = j.at("n_speakers").get<int>();
    c.speaker_prefix = j.at("speaker_prefix").get<std::string>();
    c.burst_min_ms = j.at("burst_min_ms").get<double>();
    c.burst_max_ms = j.at("burst_max_ms").get<double>();
    c.gap_min_ms = j.at("gap_min_ms").get<double>();
    c.gap_max_ms = j.at("gap_max_ms").get<double>();
    c.edge_silence_ms = j.at("edge_silence_ms").get<double>();
    c.noise_floor_db = j.at("noise_floor_db").get<double>();
    c.formant_scale = j.at("formant_scale").get<double>();
    c.f0_min_hz = j.at("f0_min_hz").get<double>();
    c.f0_max_hz = j.at("f0_max_hz").get<double>();
    c.sample_rate = j.at("sample_rate").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& snr = j.at("snr_db");
    if (!snr.is_null()) c.snr_db = snr.get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed synth configuration: ") + e.what());
  }
  c.validate();
  return c;
}

SpeakerProfile make_speaker(const SynthConfig& config, int index) {
  Rng rng(derive_seed(config.seed, "synth/speaker", static_cast<std::uint64_t>(index)));
  SpeakerProfile s;
  char id[64];
  std::snprintf(id, sizeof(id), "%s%02d", config.speaker_prefix.c_str(), index);
  s.id = id;
  s.f0_hz = rng.uniform(config.f0_min_hz, config.f0_max_hz);
  s.formants_hz = {rng.uniform(450.0, 800.0) * config.formant_scale,
                   rng.uniform(1100.0, 2000.0) * config.formant_scale,
                   rng.uniform(2400.0, 3200.0) * config.formant_scale};
  s.bandwidths_hz = {rng.uniform(60.0, 120.0), rng.uniform(90.0, 160.0), rng.uniform(120.0, 220.0)};
  return s;
}

namespace {

double formant_gain(double f, const std::vector<double>& formants,
                    const std::vector<double>& bandwidths) {
  double g = 0.0;
  for (std::size_t j = 0; j < formants.size(); ++j) {
    const double x = (f - formants[j]) / bandwidths[j];
    g += 1.0 / (1.0 + x * x) / double(j + 1);
  }
  return g;
}

std::size_t ms_to_samples(double ms, int rate) {
  return static_cast<std::size_t>(std::lround(ms * rate / 1000.0));
}

}  // namespace

Waveform synthesize_utterance(int count, const SpeakerProfile& speaker, const SynthConfig& config,
                              Rng& rng, std::vector<std::size_t>* onsets) {
  const int rate = config.sample_rate;
  Waveform wave;
  wave.sample_rate = rate;
  std::vector<double>& x = wave.samples;
  x.assign(ms_to_samples(config.edge_silence_ms, rate), 0.0);
  std::vector<std::pair<std::size_t, std::size_t>> bursts;
  const double max_harmonic_hz = std::min(5000.0, 0.45 * rate);
  for (int b = 0; b < count; ++b) {
    if (b > 0) x.resize(x.size() + ms_to_samples(rng.uniform(config.gap_min_ms, config.gap_max_ms), rate), 0.0);
    const std::size_t len = std::max<std::size_t>(
        1, ms_to_samples(rng.uniform(config.burst_min_ms, config.burst_max_ms), rate));
    const double amplitude = rng.uniform(0.25, 0.8);
    const double f0 = speaker.f0_hz * rng.uniform(0.9, 1.1);
    std::vector<double> formants = speaker.formants_hz;
    for (double& f : formants) f *= rng.uniform(0.85, 1.15);
    const int harmonics = std::max(1, static_cast<int>(max_harmonic_hz / f0));
    std::vector<double> gains(harmonics), phases(harmonics);
    double gain_norm = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      gains[h] = formant_gain(f0 * (h + 1), formants, speaker.bandwidths_hz);
      phases[h] = rng.uniform(0.0, 2.0 * M_PI);
      gain_norm += gains[h] * gains[h];
    }
    gain_norm = std::sqrt(gain_norm);
    const std::size_t start = x.size();
    if (onsets) onsets->push_back(start);
    x.resize(start + len, 0.0);
    // Harmonic oscillators advanced by complex rotation instead of sin() per sample.
    for (int h = 0; h < harmonics; ++h) {
      const double w = 2.0 * M_PI * f0 * (h + 1) / rate;
      const double cw = std::cos(w), sw = std::sin(w);
      double re = std::cos(phases[h]), im = std::sin(phases[h]);
      const double g = gains[h] / gain_norm;
      for (std::size_t n = 0; n < len; ++n) {
        x[start + n] += g * im;
        const double nre = re * cw - im * sw;
        im = re * sw + im * cw;
        re = nre;
      }
    }
    for (std::size_t n = 0; n < len; ++n) {
      const double env = 0.5 - 0.5 * std::cos(2.0 * M_PI * (n + 0.5) / len);
      x[start + n] *= amplitude * env;
    }
    bursts.emplace_back(start, len);
  }
  x.resize(x.size() + ms_to_samples(config.edge_silence_ms, rate), 0.0);

  double speech_power = 0.0;
  std::size_t speech_samples = 0;
  for (const auto& [start, len] : bursts) {
    for (std::size_t n = 0; n < len; ++n) speech_power += x[start + n] * x[start + n];
    speech_samples += len;
  }
  speech_power /= double(std::max<std::size_t>(1, speech_samples));
  double noise_std = std::pow(10.0, config.noise_floor_db / 20.0);
  if (config.snr_db)
    noise_std = std::hypot(noise_std, std::sqrt(speech_power / std::pow(10.0, *config.snr_db / 10.0)));
  for (double& v : x) v += noise_std * rng.normal();

  const double peak = std::max(std::abs(*std::max_element(x.begin(), x.end())),
                               std::abs(*std::min_element(x.begin(), x.end())));
  if (peak > 0.99)
    for (double& v : x) v *= 0.99 / peak;
  return wave;
}

CorpusManifest synthesize_corpus(const SynthConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  const std::filesystem::path audio_dir = out_dir / "audio";
  std::filesystem::create_directories(audio_dir);
  std::vector<SpeakerProfile> speakers;
  for (int s = 0; s < config.n_speakers; ++s) speakers.push_back(make_speaker(config, s));

  CorpusManifest manifest;
  manifest.name = config.name;
  for (int i = 0; i < config.n_utterances; ++i) {
    Rng rng(derive_seed(config.seed, "synth/utterance", static_cast<std::uint64_t>(i)));
    const int count = rng.between(config.min_count, config.max_count);
    const SpeakerProfile& speaker = speakers[static_cast<std::size_t>(i % config.n_speakers)];
    const Waveform wave = synthesize_utterance(count, speaker, config, rng);
    char id[128];
    std::snprintf(id, sizeof(id), "%s_%05d", config.name.c_str(), i);
    Utterance u;
    u.id = id;
    u.audio_path = audio_dir / (u.id + ".wav");
    u.syllable_count = count;
    u.speaker_id = speaker.id;
    write_wav(u.audio_path, wave);
    u.duration_s = read_wav_info(u.audio_path).duration_s();
    manifest.utterances.push_back(std::move(u));
  }
  save_manifest(manifest, out_dir / "manifest.jsonl");
  return manifest;
}

}  // namespace sylcount
