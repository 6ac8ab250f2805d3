#include "sylcount/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

#include "sylcount/error.hpp"

namespace sylcount {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

struct ParsedHeader {
  WavInfo info;
  std::uint16_t format = 0;
  std::streamoff data_offset = 0;
  std::uint32_t data_bytes = 0;
};

ParsedHeader parse_header(std::ifstream& in, const std::filesystem::path& path) {
  auto fail = [&](const std::string& why) {
    return DataError("cannot read audio '" + path.string() + "': " + why);
  };
  unsigned char riff[12];
  if (!in.read(reinterpret_cast<char*>(riff), 12)) throw fail("file too short");
  if (std::memcmp(riff, "RIFF", 4) != 0 || std::memcmp(riff + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  ParsedHeader h;
  bool have_fmt = false;
  while (true) {
    unsigned char chunk[8];
    if (!in.read(reinterpret_cast<char*>(chunk), 8)) throw fail("missing data chunk");
    const std::uint32_t size = le32(chunk + 4);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("fmt chunk too small");
      std::vector<unsigned char> fmt(size);
      if (!in.read(reinterpret_cast<char*>(fmt.data()), size)) throw fail("truncated fmt chunk");
      h.format = le16(fmt.data());
      h.info.channels = le16(fmt.data() + 2);
      h.info.sample_rate = static_cast<int>(le32(fmt.data() + 4));
      h.info.bits_per_sample = le16(fmt.data() + 14);
      if (h.format == kFormatExtensible) {
        if (size < 26) throw fail("extensible fmt chunk too small");
        h.format = le16(fmt.data() + 24);
      }
      have_fmt = true;
      if (size % 2) in.seekg(1, std::ios::cur);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw fail("data chunk before fmt chunk");
      h.data_offset = in.tellg();
      h.data_bytes = size;
      break;
    } else {
      in.seekg(size + (size % 2), std::ios::cur);
    }
  }
  if (h.format != kFormatPcm && h.format != kFormatFloat)
    throw fail("unsupported sample format " + std::to_string(h.format));
  if (h.info.channels < 1) throw fail("zero channels");
  if (h.info.sample_rate <= 0) throw fail("invalid sample rate");
  const int bps = h.info.bits_per_sample;
  const bool ok_bits = h.format == kFormatPcm ? (bps == 8 || bps == 16 || bps == 24 || bps == 32)
                                              : (bps == 32 || bps == 64);
  if (!ok_bits) throw fail("unsupported bits per sample " + std::to_string(bps));
  const std::size_t frame_bytes = std::size_t(bps / 8) * h.info.channels;
  h.info.frames = h.data_bytes / frame_bytes;
  return h;
}

}  // namespace

WavInfo read_wav_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio '" + path.string() + "'");
  return parse_header(in, path).info;
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open audio '" + path.string() + "'");
  const ParsedHeader h = parse_header(in, path);
  if (h.info.channels != 1)
    throw DataError("audio '" + path.string() + "' has " + std::to_string(h.info.channels) +
                    " channels; mono required");
  const int bytes = h.info.bits_per_sample / 8;
  std::vector<unsigned char> raw(h.info.frames * bytes);
  in.seekg(h.data_offset);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size())))
    throw DataError("cannot read audio '" + path.string() + "': truncated data chunk");

  Waveform wave;
  wave.sample_rate = h.info.sample_rate;
  wave.samples.resize(h.info.frames);
  for (std::size_t i = 0; i < h.info.frames; ++i) {
    const unsigned char* p = raw.data() + i * bytes;
    double v = 0.0;
    if (h.format == kFormatFloat) {
      if (bytes == 4) {
        float f;
        std::uint32_t u = le32(p);
        std::memcpy(&f, &u, 4);
        v = f;
      } else {
        std::uint64_t u = std::uint64_t(le32(p)) | (std::uint64_t(le32(p + 4)) << 32);
        std::memcpy(&v, &u, 8);
      }
    } else {
      switch (bytes) {
        case 1: v = (double(p[0]) - 128.0) / 128.0; break;
        case 2: v = double(std::int16_t(le16(p))) / 32768.0; break;
        case 3: {
          std::int32_t s = std::int32_t(p[0] | (p[1] << 8) | (p[2] << 16));
          if (s & 0x800000) s -= 0x1000000;
          v = double(s) / 8388608.0;
          break;
        }
        default: v = double(std::int32_t(le32(p))) / 2147483648.0; break;
      }
    }
    wave.samples[i] = v;
  }
  return wave;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write audio '" + path.string() + "'");
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  auto put32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  auto put16 = [&](std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<char*>(b), 2);
  };
  out.write("RIFF", 4);
  put32(36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put32(16);
  put16(kFormatPcm);
  put16(1);
  put32(static_cast<std::uint32_t>(wave.sample_rate));
  put32(static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put16(2);
  put16(16);
  out.write("data", 4);
  put32(data_bytes);
  for (double s : wave.samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    const long q = std::clamp(std::lround(c * 32768.0), -32768L, 32767L);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!out) throw DataError("failed writing audio '" + path.string() + "'");
}

Waveform resample(const Waveform& wave, int target_rate) {
  if (target_rate <= 0) throw DataError("invalid target sample rate");
  if (wave.sample_rate == target_rate || wave.samples.empty()) {
    Waveform copy = wave;
    copy.sample_rate = target_rate;
    return copy;
  }
  // Kaiser-windowed sinc interpolation, cutoff at the lower Nyquist frequency.
  constexpr int kZeroCrossings = 16;
  constexpr double kBeta = 8.0;
  const double ratio = double(target_rate) / wave.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // relative to input Nyquist
  const double half_width = kZeroCrossings / cutoff;  // in input samples
  auto bessel_i0 = [](double x) {
    double sum = 1.0, term = 1.0;
    for (int k = 1; k < 50; ++k) {
      term *= (x / (2.0 * k)) * (x / (2.0 * k));
      sum += term;
      if (term < 1e-17 * sum) break;
    }
    return sum;
  };
  const double i0_beta = bessel_i0(kBeta);

  const auto n_in = static_cast<long>(wave.samples.size());
  const auto n_out = static_cast<long>(std::floor(n_in * ratio));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.assign(static_cast<std::size_t>(std::max(0L, n_out)), 0.0);
  for (long j = 0; j < n_out; ++j) {
    const double center = j / ratio;
    const long lo = std::max(0L, static_cast<long>(std::ceil(center - half_width)));
    const long hi = std::min(n_in - 1, static_cast<long>(std::floor(center + half_width)));
    double acc = 0.0;
    for (long k = lo; k <= hi; ++k) {
      const double x = k - center;
      const double arg = cutoff * x;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(M_PI * arg) / (M_PI * arg);
      const double r = x / half_width;
      const double window = bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      acc += wave.samples[static_cast<std::size_t>(k)] * cutoff * sinc * window;
    }
    out.samples[static_cast<std::size_t>(j)] = acc;
  }
  return out;
}

Waveform load_audio(const std::filesystem::path& path, int target_rate) {
  Waveform wave = read_wav(path);
  if (wave.sample_rate != target_rate) wave = resample(wave, target_rate);
  return wave;
}

}  // namespace sylcount
