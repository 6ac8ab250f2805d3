#include "sylcount/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <unistd.h>
#include <vector>

#include <fftw3.h>

#include "sylcount/corpus.hpp"
#include "sylcount/error.hpp"
#include "sylcount/logging.hpp"
#include "sylcount/random.hpp"

namespace sylcount {

int FeatureConfig::window_samples() const {
  return static_cast<int>(std::lround(window_ms * sample_rate_hz / 1000.0));
}

int FeatureConfig::hop_samples() const {
  return static_cast<int>(std::lround(hop_ms * sample_rate_hz / 1000.0));
}

void FeatureConfig::validate() const {
  if (sample_rate_hz <= 0) throw UsageError("features: sample_rate_hz must be positive");
  if (!(hop_ms > 0.0) || !(window_ms > hop_ms))
    throw UsageError("features: require window_ms > hop_ms > 0");
  if (hop_samples() < 1) throw UsageError("features: hop shorter than one sample");
  if (n_mels < 1) throw UsageError("features: n_mels must be >= 1");
  if (!(fmin_hz >= 0.0) || !(fmin_hz < fmax_hz) || fmax_hz > sample_rate_hz / 2.0)
    throw UsageError("features: require 0 <= fmin_hz < fmax_hz <= sample_rate_hz/2");
  if (!(log_floor > 0.0)) throw UsageError("features: log_floor must be positive");
}

std::string FeatureConfig::cache_key() const {
  std::ostringstream os;
  os << std::setprecision(17) << "sr=" << sample_rate_hz << ";win=" << window_ms
     << ";hop=" << hop_ms << ";mels=" << n_mels << ";fmin=" << fmin_hz << ";fmax=" << fmax_hz
     << ";floor=" << log_floor << ";v=1";
  return os.str();
}

nlohmann::json FeatureConfig::to_json() const {
  return {{"sample_rate_hz", sample_rate_hz}, {"window_ms", window_ms}, {"hop_ms", hop_ms},
          {"n_mels", n_mels},                 {"fmin_hz", fmin_hz},     {"fmax_hz", fmax_hz},
          {"log_floor", log_floor},           {"normalize", normalize}};
}

FeatureConfig FeatureConfig::from_json(const nlohmann::json& j) {
  FeatureConfig c;
  try {
    c.sample_rate_hz = j.at("sample_rate_hz").get<int>();
    c.window_ms = j.at("window_ms").get<double>();
    c.hop_ms = j.at("hop_ms").get<double>();
    c.n_mels = j.at("n_mels").get<int>();
    c.fmin_hz = j.at("fmin_hz").get<double>();
    c.fmax_hz = j.at("fmax_hz").get<double>();
    c.log_floor = j.at("log_floor").get<double>();
    c.normalize = j.at("normalize").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed feature configuration: ") + e.what());
  }
  c.validate();
  return c;
}

std::size_t frame_count(std::size_t samples, const FeatureConfig& config) {
  const auto win = static_cast<std::size_t>(config.window_samples());
  const auto hop = static_cast<std::size_t>(config.hop_samples());
  if (samples < win) return 0;
  return (samples - win) / hop + 1;
}

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// n_mels x (fft_size/2 + 1) triangular filterbank over linear frequency.
Eigen::MatrixXd mel_filterbank(const FeatureConfig& config, int fft_size) {
  const int bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(config.fmin_hz);
  const double mel_hi = hz_to_mel(config.fmax_hz);
  std::vector<double> edges(config.n_mels + 2);
  for (int i = 0; i < config.n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (config.n_mels + 1));
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(config.n_mels, bins);
  for (int m = 0; m < config.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = double(k) * config.sample_rate_hz / fft_size;
      double w = 0.0;
      if (f > left && f <= center)
        w = (f - left) / (center - left);
      else if (f > center && f < right)
        w = (right - f) / (right - center);
      fb(m, k) = w;
    }
  }
  return fb;
}

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

FeatureMatrix extract_features(const Waveform& audio, const FeatureConfig& config) {
  config.validate();
  if (audio.sample_rate != config.sample_rate_hz)
    throw DataError("extract_features: audio rate " + std::to_string(audio.sample_rate) +
                    " Hz does not match configured " + std::to_string(config.sample_rate_hz) +
                    " Hz");
  if (audio.samples.empty()) throw DataError("extract_features: empty audio");
  for (double s : audio.samples)
    if (!std::isfinite(s)) throw DataError("extract_features: non-finite audio sample");
  const std::size_t frames = frame_count(audio.samples.size(), config);
  if (frames == 0) throw DataError("extract_features: audio shorter than one analysis window");

  const int win = config.window_samples();
  const int hop = config.hop_samples();
  int fft_size = 1;
  while (fft_size < win) fft_size <<= 1;
  const int bins = fft_size / 2 + 1;

  std::vector<double> window(win);
  for (int i = 0; i < win; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (win - 1));
  const Eigen::MatrixXd fb = mel_filterbank(config, fft_size);

  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(fft_size));
  std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(bins));
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(fft_size, in.get(), out.get(), FFTW_ESTIMATE);
  }

  FeatureMatrix result;
  result.frame_hop_ms = config.hop_ms;
  result.values.resize(static_cast<Eigen::Index>(frames), config.n_mels);
  Eigen::VectorXd power(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t offset = t * static_cast<std::size_t>(hop);
    for (int i = 0; i < win; ++i) in.get()[i] = audio.samples[offset + i] * window[i];
    for (int i = win; i < fft_size; ++i) in.get()[i] = 0.0;
    fftw_execute(plan);
    for (int k = 0; k < bins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      power[k] = re * re + im * im;
    }
    const Eigen::VectorXd mel = fb * power;
    for (int m = 0; m < config.n_mels; ++m)
      result.values(static_cast<Eigen::Index>(t), m) = std::log(mel[m] + config.log_floor);
  }
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return result;
}

FeatureMatrix normalize_features(FeatureMatrix features, const FeatureConfig& config) {
  if (!config.normalize || features.values.rows() == 0) return features;
  auto& v = features.values;
  const double n = static_cast<double>(v.rows());
  for (Eigen::Index d = 0; d < v.cols(); ++d) {
    const double mean = v.col(d).mean();
    v.col(d).array() -= mean;
    const double var = v.col(d).squaredNorm() / n;
    if (var > 1e-12) v.col(d) /= std::sqrt(var);
  }
  return features;
}

namespace {

constexpr const char* kMagic = "SYLFEAT 1";

std::uint64_t payload_checksum(const std::vector<unsigned char>& bytes) {
  return fnv1a64(bytes.data(), bytes.size());
}

std::vector<unsigned char> encode_payload(const Eigen::MatrixXd& values) {
  std::vector<unsigned char> bytes;
  bytes.reserve(static_cast<std::size_t>(values.size()) * 8);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint64_t>(values(r, c));
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
  }
  return bytes;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

void write_feature_file(const std::filesystem::path& path, const FeatureMatrix& features) {
  const auto payload = encode_payload(features.values);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file '" + path.string() + "'");
  out << kMagic << "\nrows " << features.values.rows() << "\ncols " << features.values.cols()
      << "\nhop_ms " << std::setprecision(17) << features.frame_hop_ms << "\nid "
      << features.utterance_id << "\nchecksum " << hex64(payload_checksum(payload)) << "\n\n";
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("failed writing feature file '" + path.string() + "'");
}

FeatureMatrix read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file '" + path.string() + "'");
  auto fail = [&](const std::string& why) {
    return DataError("corrupt feature file '" + path.string() + "': " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw fail("bad magic");
  long rows = -1, cols = -1;
  double hop = 0.0;
  std::string id, checksum;
  while (std::getline(in, line) && !line.empty()) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "rows") ls >> rows;
    else if (key == "cols") ls >> cols;
    else if (key == "hop_ms") ls >> hop;
    else if (key == "id") id = line.size() > 3 ? line.substr(3) : "";
    else if (key == "checksum") ls >> checksum;
    else throw fail("unknown header field '" + key + "'");
  }
  if (rows < 0 || cols < 0 || checksum.empty()) throw fail("incomplete header");
  std::vector<unsigned char> payload(static_cast<std::size_t>(rows * cols * 8));
  if (!in.read(reinterpret_cast<char*>(payload.data()),
               static_cast<std::streamsize>(payload.size())))
    throw fail("truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw fail("trailing bytes");
  if (hex64(payload_checksum(payload)) != checksum) throw fail("checksum mismatch");

  FeatureMatrix f;
  f.frame_hop_ms = hop;
  f.utterance_id = id;
  f.values.resize(rows, cols);
  std::size_t pos = 0;
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= std::uint64_t(payload[pos++]) << (8 * b);
      f.values(r, c) = std::bit_cast<double>(bits);
    }
  }
  return f;
}

namespace {

std::uint64_t file_content_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read audio '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got) h = fnv1a64(buf.data(), got, h);
  }
  return h;
}

std::atomic<std::uint64_t> temp_counter{0};

}  // namespace

FeatureMatrix cached_extract(const Utterance& utterance, const FeatureConfig& config,
                             const std::filesystem::path& cache_dir, CacheStats* stats) {
  config.validate();
  const std::string key = hex64(file_content_hash(utterance.audio_path)) + "-" +
                          hex64(fnv1a64(config.cache_key()));
  const std::filesystem::path entry = cache_dir / (key + ".feat");

  if (std::filesystem::exists(entry)) {
    try {
      FeatureMatrix cached = read_feature_file(entry);
      cached.utterance_id = utterance.id;
      if (cached.values.cols() != config.n_mels) throw DataError("width mismatch");
      if (stats) ++stats->hits;
      return cached;
    } catch (const DataError& e) {
      warn("feature cache entry '" + entry.string() + "' is unusable (" + e.what() +
           "); recomputing");
      if (stats) ++stats->repaired;
    }
  }

  const Waveform audio = load_audio(utterance.audio_path, config.sample_rate_hz);
  FeatureMatrix features = extract_features(audio, config);
  features.utterance_id = utterance.id;
  if (stats) ++stats->computed;

  std::filesystem::create_directories(cache_dir);
  // Write-then-rename keeps concurrent writers of the same key from ever
  // exposing a partial file; the last rename wins with identical content.
  std::ostringstream tmp_name;
  tmp_name << key << ".tmp." << ::getpid() << "." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
           << temp_counter.fetch_add(1);
  const std::filesystem::path tmp = cache_dir / tmp_name.str();
  write_feature_file(tmp, features);
  std::filesystem::rename(tmp, entry);
  return features;
}

}  // namespace sylcount
