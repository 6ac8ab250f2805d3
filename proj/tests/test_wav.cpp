#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>

#include "sylcount/error.hpp"
#include "sylcount/wav.hpp"
#include "test_support.hpp"

using namespace sylcount;

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::ofstream& out, std::uint16_t v) {
  out.put(static_cast<char>(v & 0xff));
  out.put(static_cast<char>(v >> 8));
}

void write_raw_pcm16(const std::filesystem::path& path, int channels, int rate,
                     const std::vector<std::int16_t>& data) {
  std::ofstream out(path, std::ios::binary);
  out.write("RIFF", 4);
  put_u32(out, 36 + 2 * data.size());
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * channels * 2);
  put_u16(out, channels * 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, 2 * data.size());
  for (std::int16_t s : data) put_u16(out, static_cast<std::uint16_t>(s));
}

}  // namespace

TEST_CASE("wav: 16-bit round trip within quantization and clipping") {
  const auto dir = testing::scratch_dir("wav");
  Waveform w;
  w.sample_rate = 22050;
  for (int i = 0; i < 1000; ++i) w.samples.push_back(0.8 * std::sin(i * 0.05));
  w.samples.push_back(3.0);
  w.samples.push_back(-3.0);
  write_wav(dir / "a.wav", w);
  const WavInfo info = read_wav_info(dir / "a.wav");
  CHECK(info.sample_rate == 22050);
  CHECK(info.channels == 1);
  CHECK(info.bits_per_sample == 16);
  CHECK(info.frames == w.samples.size());
  const Waveform r = read_wav(dir / "a.wav");
  REQUIRE(r.samples.size() == w.samples.size());
  for (int i = 0; i < 1000; ++i) CHECK(std::abs(r.samples[i] - w.samples[i]) <= 0.5 / 32768.0);
  CHECK(r.samples[1000] == 32767.0 / 32768.0);
  CHECK(r.samples[1001] == -1.0);
}

TEST_CASE("wav: rejects stereo, missing and truncated files") {
  const auto dir = testing::scratch_dir("wav_bad");
  write_raw_pcm16(dir / "stereo.wav", 2, 16000, {0, 0, 100, -100});
  CHECK_THROWS_AS(read_wav(dir / "stereo.wav"), DataError);
  CHECK_THROWS_AS(read_wav(dir / "missing.wav"), DataError);
  std::ofstream(dir / "junk.wav") << "RIFF";
  CHECK_THROWS_AS(read_wav_info(dir / "junk.wav"), DataError);
  write_raw_pcm16(dir / "mono.wav", 1, 8000, {0, 16384, -16384});
  const Waveform m = read_wav(dir / "mono.wav");
  CHECK(m.sample_rate == 8000);
  CHECK(m.samples == std::vector<double>{0.0, 0.5, -0.5});
}

TEST_CASE("resample: preserves in-band tones and duration") {
  Waveform w;
  w.sample_rate = 22050;
  for (int i = 0; i < 22050; ++i) w.samples.push_back(0.5 * std::sin(2 * std::numbers::pi * 440.0 * i / 22050.0));
  const Waveform r = resample(w, 16000);
  CHECK(r.sample_rate == 16000);
  CHECK(std::abs(double(r.samples.size()) - 16000.0) <= 1.0);
  double max_err = 0.0;
  for (std::size_t i = 500; i + 500 < r.samples.size(); ++i)
    max_err = std::max(max_err, std::abs(r.samples[i] - 0.5 * std::sin(2 * std::numbers::pi * 440.0 * i / 16000.0)));
  CHECK(max_err < 0.01);
  CHECK(resample(w, 22050).samples == w.samples);
}

TEST_CASE("resample: removes content above the new Nyquist frequency") {
  Waveform w;
  w.sample_rate = 48000;
  for (int i = 0; i < 48000; ++i) w.samples.push_back(0.5 * std::sin(2 * std::numbers::pi * 12000.0 * i / 48000.0));
  const Waveform r = resample(w, 16000);
  double rms = 0.0;
  for (std::size_t i = 500; i + 500 < r.samples.size(); ++i) rms += r.samples[i] * r.samples[i];
  rms = std::sqrt(rms / double(r.samples.size() - 1000));
  CHECK(rms < 0.01);
}
