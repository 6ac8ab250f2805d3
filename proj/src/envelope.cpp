#include "sylcount/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sylcount/error.hpp"
#include "sylcount/random.hpp"

namespace sylcount {

void BandEnergyConfig::validate() const {
  if (sample_rate_hz <= 0) throw UsageError("envelope: sample_rate_hz must be positive");
  if (!(band_lo_hz > 0.0) || !(band_hi_hz > band_lo_hz) || band_hi_hz >= sample_rate_hz / 2.0)
    throw UsageError("envelope: require 0 < band_lo_hz < band_hi_hz < Nyquist");
  if (!(smoothing_hz > 0.0)) throw UsageError("envelope: smoothing_hz must be positive");
  if (!(hop_ms > 0.0)) throw UsageError("envelope: hop_ms must be positive");
}

nlohmann::json BandEnergyConfig::to_json() const {
  return {{"sample_rate_hz", sample_rate_hz},
          {"band_lo_hz", band_lo_hz},
          {"band_hi_hz", band_hi_hz},
          {"smoothing_hz", smoothing_hz},
          {"hop_ms", hop_ms}};
}

BandEnergyConfig BandEnergyConfig::from_json(const nlohmann::json& j) {
  BandEnergyConfig c;
  try {
    c.sample_rate_hz = j.at("sample_rate_hz").get<int>();
    c.band_lo_hz = j.at("band_lo_hz").get<double>();
    c.band_hi_hz = j.at("band_hi_hz").get<double>();
    c.smoothing_hz = j.at("smoothing_hz").get<double>();
    c.hop_ms = j.at("hop_ms").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed envelope configuration: ") + e.what());
  }
  c.validate();
  return c;
}

std::string BandEnergyEnvelope::config_key() const {
  std::ostringstream os;
  os << std::setprecision(17) << "band_energy;sr=" << config_.sample_rate_hz
     << ";lo=" << config_.band_lo_hz << ";hi=" << config_.band_hi_hz
     << ";smooth=" << config_.smoothing_hz << ";hop=" << config_.hop_ms;
  return os.str();
}

namespace {

// Second-order section (RBJ cookbook, Q = 1/sqrt(2)).
struct Biquad {
  double b0, b1, b2, a1, a2;

  static Biquad lowpass(double fc, double fs) {
    const double w = 2.0 * M_PI * fc / fs, c = std::cos(w), alpha = std::sin(w) / std::sqrt(2.0);
    const double a0 = 1.0 + alpha;
    return {(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0, -2.0 * c / a0,
            (1.0 - alpha) / a0};
  }
  static Biquad highpass(double fc, double fs) {
    const double w = 2.0 * M_PI * fc / fs, c = std::cos(w), alpha = std::sin(w) / std::sqrt(2.0);
    const double a0 = 1.0 + alpha;
    return {(1.0 + c) / 2.0 / a0, -(1.0 + c) / a0, (1.0 + c) / 2.0 / a0, -2.0 * c / a0,
            (1.0 - alpha) / a0};
  }

  void run(std::vector<double>& x) const {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double y = b0 * v + z1;
      z1 = b1 * v - a1 * y + z2;
      z2 = b2 * v - a2 * y;
      v = y;
    }
  }
  void run_reversed(std::vector<double>& x) const {
    std::reverse(x.begin(), x.end());
    run(x);
    std::reverse(x.begin(), x.end());
  }
};

}  // namespace

Envelope band_energy_envelope(const Waveform& audio, const BandEnergyConfig& config) {
  config.validate();
  if (audio.sample_rate != config.sample_rate_hz)
    throw DataError("band_energy_envelope: audio rate does not match the configured rate");
  const double fs = config.sample_rate_hz;
  std::vector<double> x = audio.samples;
  for (double v : x)
    if (!std::isfinite(v)) throw DataError("band_energy_envelope: non-finite audio sample");

  const Biquad hp = Biquad::highpass(config.band_lo_hz, fs);
  const Biquad lp = Biquad::lowpass(config.band_hi_hz, fs);
  hp.run(x);
  hp.run(x);
  lp.run(x);
  lp.run(x);
  for (double& v : x) v = std::abs(v);
  const Biquad smooth = Biquad::lowpass(config.smoothing_hz, fs);
  smooth.run(x);
  smooth.run_reversed(x);

  const auto hop = static_cast<std::size_t>(std::lround(config.hop_ms * fs / 1000.0));
  Envelope env;
  env.hop_ms = config.hop_ms;
  const std::size_t frames = hop ? x.size() / hop : 0;
  env.values.resize(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    double sum = 0.0;
    for (std::size_t k = 0; k < hop; ++k) sum += x[t * hop + k];
    env.values[t] = std::max(0.0, sum / double(hop));
  }
  const double peak = env.values.empty() ? 0.0 : *std::max_element(env.values.begin(), env.values.end());
  if (peak > 0.0) {
    for (double& v : env.values) v /= peak;
  }
  return env;
}

int pick_peaks(std::span<const double> values, double theta) {
  if (theta < 0.0) throw UsageError("pick_peaks: theta must be >= 0");
  // Collapse flat runs, then classify interior runs against both neighbours.
  std::vector<double> runs;
  for (double v : values)
    if (runs.empty() || v != runs.back()) runs.push_back(v);
  if (runs.size() < 3) return 0;
  double reference = values.front();
  int count = 0;
  for (std::size_t r = 1; r + 1 < runs.size(); ++r) {
    const double prev = runs[r - 1], cur = runs[r], next = runs[r + 1];
    if (cur > prev && cur > next) {
      if (cur - reference >= theta) ++count;
    } else if (cur < prev && cur < next) {
      reference = cur;
    }
  }
  return count;
}

std::vector<double> default_theta_grid() {
  std::vector<double> grid(101);
  for (int i = 0; i <= 100; ++i) grid[i] = i / 100.0;
  return grid;
}

namespace {

double calibration_error(const std::vector<int>& peaks, std::span<const int> counts,
                         const EnvelopeCalibration& cal) {
  double sum = 0.0;
  for (std::size_t u = 0; u < peaks.size(); ++u)
    sum += std::abs(apply_calibration(peaks[u], cal) - counts[u]) / counts[u];
  return sum / double(peaks.size());
}

}  // namespace

CalibrationResult calibrate(std::span<const Envelope> envelopes, std::span<const int> counts,
                            std::span<const double> theta_grid,
                            std::optional<EnvelopeCalibration> incumbent) {
  if (envelopes.size() != counts.size())
    throw UsageError("calibrate: envelopes and counts differ in length");
  if (envelopes.size() < 2) throw DataError("calibrate: at least 2 utterances are required");
  if (theta_grid.empty()) throw UsageError("calibrate: empty theta grid");
  for (int s : counts)
    if (s < 1) throw DataError("calibrate: counts must be >= 1");

  const double m = double(counts.size());
  double mean_s = 0.0;
  for (int s : counts) mean_s += s;
  mean_s /= m;

  std::optional<CalibrationResult> best;
  std::vector<int> peaks(envelopes.size());
  for (double theta : theta_grid) {
    if (theta < 0.0) throw UsageError("calibrate: theta grid values must be >= 0");
    for (std::size_t u = 0; u < envelopes.size(); ++u) peaks[u] = pick_peaks(envelopes[u], theta);
    double mean_n = 0.0;
    for (int n : peaks) mean_n += n;
    mean_n /= m;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t u = 0; u < peaks.size(); ++u) {
      const double dx = peaks[u] - mean_n;
      sxx += dx * dx;
      sxy += dx * (counts[u] - mean_s);
    }
    EnvelopeCalibration cal{theta, 0.0, mean_s};
    if (sxx > 0.0) {
      cal.alpha = sxy / sxx;
      cal.beta = mean_s - cal.alpha * mean_n;
    }
    const double err = calibration_error(peaks, counts, cal);
    const bool better = !best || err < best->relative_error ||
                        (err == best->relative_error && theta < best->calibration.theta);
    if (better) best = CalibrationResult{cal, err, false};
  }
  if (incumbent) {
    for (std::size_t u = 0; u < envelopes.size(); ++u)
      peaks[u] = pick_peaks(envelopes[u], incumbent->theta);
    const double err = calibration_error(peaks, counts, *incumbent);
    if (err < best->relative_error) best = CalibrationResult{*incumbent, err, true};
  }
  return *best;
}

void save_calibration(const std::filesystem::path& path, const EnvelopeCalibration& cal,
                      const EnvelopeEstimator& estimator) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write calibration '" + path.string() + "'");
  const nlohmann::json j = {{"theta", cal.theta},
                            {"alpha", cal.alpha},
                            {"beta", cal.beta},
                            {"envelope", estimator.name()},
                            {"envelope_config_hash", fnv1a64(estimator.config_key())}};
  out << j.dump(2) << '\n';
}

EnvelopeCalibration load_calibration(const std::filesystem::path& path,
                                     const EnvelopeEstimator& estimator) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open calibration '" + path.string() + "'");
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("envelope_config_hash").get<std::uint64_t>() != fnv1a64(estimator.config_key()))
      throw DataError("calibration '" + path.string() +
                      "' was estimated with a different envelope configuration");
    EnvelopeCalibration cal{j.at("theta").get<double>(), j.at("alpha").get<double>(),
                            j.at("beta").get<double>()};
    if (cal.theta < 0.0) throw DataError("calibration '" + path.string() + "': negative theta");
    return cal;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed calibration '" + path.string() + "': " + e.what());
  }
}

}  // namespace sylcount
