#pragma once

#include <filesystem>
#include <vector>

namespace sylcount {

// Mono waveform with samples nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  std::size_t frames = 0;

  double duration_s() const { return sample_rate > 0 ? double(frames) / sample_rate : 0.0; }
};

// Reads only the header. Throws DataError naming the path on failure.
WavInfo read_wav_info(const std::filesystem::path& path);

// Reads a mono PCM (8/16/24/32-bit integer) or IEEE float WAV file.
Waveform read_wav(const std::filesystem::path& path);

// Writes 16-bit PCM; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& wave);

// Band-limited (windowed-sinc) sample-rate conversion.
Waveform resample(const Waveform& wave, int target_rate);

// read_wav followed by resampling to target_rate when needed.
Waveform load_audio(const std::filesystem::path& path, int target_rate);

}  // namespace sylcount
