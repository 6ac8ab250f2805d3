#include "doctest.h"

#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "oracles.hpp"
#include "sylcount/envelope.hpp"
#include "sylcount/error.hpp"
#include "sylcount/random.hpp"
#include "test_support.hpp"

using namespace sylcount;

namespace {

Envelope env(std::vector<double> v) { return Envelope{std::move(v), 10.0, "u"}; }

// Tone bursts of `burst_ms` separated by `gap_ms` of silence.
Waveform tone_bursts(int count, double burst_ms, double gap_ms, double freq_hz = 1000.0) {
  Waveform w;
  const int rate = w.sample_rate;
  const auto n = [&](double ms) { return static_cast<std::size_t>(ms * rate / 1000.0); };
  w.samples.assign(n(gap_ms), 0.0);
  for (int b = 0; b < count; ++b) {
    const std::size_t len = n(burst_ms);
    for (std::size_t i = 0; i < len; ++i) {
      const double shape = std::sin(std::numbers::pi * double(i) / double(len));
      w.samples.push_back(0.5 * shape * std::sin(2.0 * std::numbers::pi * freq_hz * double(i) / rate));
    }
    w.samples.insert(w.samples.end(), n(gap_ms), 0.0);
  }
  return w;
}

double ols_error(const std::vector<int>& peaks, const std::vector<int>& counts) {
  const double m = double(peaks.size());
  double mx = 0, my = 0;
  for (std::size_t u = 0; u < peaks.size(); ++u) mx += peaks[u] / m, my += counts[u] / m;
  double sxx = 0, sxy = 0;
  for (std::size_t u = 0; u < peaks.size(); ++u)
    sxx += (peaks[u] - mx) * (peaks[u] - mx), sxy += (peaks[u] - mx) * (counts[u] - my);
  const double a = sxx > 0 ? sxy / sxx : 0.0, b = my - a * mx;
  std::vector<double> pred;
  for (int p : peaks) pred.push_back(a * p + b);
  return oracle::l1_relative(pred, counts);
}

}  // namespace

TEST_CASE("pick_peaks: worked examples") {
  const std::vector<double> v{0, 1, 0.2, 0.9, 0};
  CHECK(pick_peaks(v, 0.5) == 2);
  CHECK(pick_peaks(v, 0.75) == 1);
  CHECK(pick_peaks(v, 0.0) == 2);
  CHECK(pick_peaks(v, 1.01) == 0);
  // A flat-topped maximum counts once.
  CHECK(pick_peaks(std::vector<double>{0, 0.8, 0.8, 0.8, 0}, 0.5) == 1);
  // Edge samples are never peaks.
  CHECK(pick_peaks(std::vector<double>{1, 0, 1}, 0.0) == 0);
  CHECK(pick_peaks(std::vector<double>{}, 0.0) == 0);
  CHECK(pick_peaks(std::vector<double>{0.5}, 0.0) == 0);
  CHECK_THROWS_AS(pick_peaks(v, -0.1), UsageError);
}

TEST_CASE("pick_peaks: agrees with brute-force enumeration and is monotone in theta") {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(rng.between(0, 40));
    // Quantized values so plateaus occur.
    for (double& x : v) x = rng.between(0, 8) / 8.0;
    const std::vector<double> rises = oracle::peak_rises(v);
    int previous = pick_peaks(v, 0.0);
    for (double theta : default_theta_grid()) {
      const int n = pick_peaks(v, theta);
      CHECK(n == oracle::count_peaks(rises, theta));
      CHECK(n <= previous);
      previous = n;
    }
  }
}

TEST_CASE("band_energy_envelope: silence gives zeros, bursts give one peak each") {
  BandEnergyConfig config;
  Waveform silence;
  silence.samples.assign(8000, 0.0);
  const Envelope flat = band_energy_envelope(silence, config);
  CHECK(flat.values.size() == 50);
  for (double x : flat.values) CHECK(x == 0.0);

  for (int count = 1; count <= 6; ++count) {
    const Envelope e = band_energy_envelope(tone_bursts(count, 180, 220), config);
    CHECK(e.hop_ms == 10.0);
    double peak = 0.0;
    for (double x : e.values) {
      CHECK(x >= 0.0);
      peak = std::max(peak, x);
    }
    CHECK(peak == doctest::Approx(1.0));
    CHECK(pick_peaks(e, 0.2) == count);
  }
  // Out-of-band energy is strongly attenuated relative to in-band energy.
  Waveform mixed = tone_bursts(2, 180, 220, 1000.0);
  const Waveform low = tone_bursts(3, 90, 310, 60.0);
  mixed.samples.resize(std::max(mixed.samples.size(), low.samples.size()), 0.0);
  for (std::size_t i = 0; i < low.samples.size(); ++i) mixed.samples[i] += low.samples[i];
  CHECK(pick_peaks(band_energy_envelope(mixed, config), 0.2) == 2);
}

TEST_CASE("band_energy_envelope: is scale invariant and deterministic") {
  const Waveform w = tone_bursts(3, 150, 200);
  Waveform quiet = w;
  for (double& x : quiet.samples) x *= 0.01;
  const Envelope a = band_energy_envelope(w, {});
  const Envelope b = band_energy_envelope(quiet, {});
  REQUIRE(a.values.size() == b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == doctest::Approx(b.values[i]).epsilon(1e-9));
  CHECK(band_energy_envelope(w, {}).values == a.values);
}

TEST_CASE("BandEnergyConfig: validation and JSON") {
  BandEnergyConfig c;
  c.band_hi_hz = 9000;  // above Nyquist
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.band_lo_hz = 3000;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.smoothing_hz = 12.5;
  const BandEnergyConfig back = BandEnergyConfig::from_json(c.to_json());
  CHECK(back.smoothing_hz == 12.5);
  CHECK(BandEnergyEnvelope(back).config_key() == BandEnergyEnvelope(c).config_key());
  CHECK(BandEnergyEnvelope(back).config_key() != BandEnergyEnvelope().config_key());
  CHECK_THROWS_AS(BandEnergyConfig::from_json(nlohmann::json{{"hop_ms", "ten"}}), DataError);
}

TEST_CASE("calibrate: reaches the grid minimum of the least-squares error") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Envelope> envs;
    std::vector<int> counts;
    for (int u = 0; u < 12; ++u) {
      std::vector<double> v(30);
      for (double& x : v) x = rng.uniform();
      envs.push_back(env(v));
      counts.push_back(rng.between(1, 10));
    }
    const std::vector<double> grid = default_theta_grid();
    const CalibrationResult r = calibrate(envs, counts, grid);
    double best = 1e300;
    double best_theta = -1;
    for (double theta : grid) {
      std::vector<int> peaks;
      for (const Envelope& e : envs) peaks.push_back(oracle::count_peaks(oracle::peak_rises(e.values), theta));
      const double err = ols_error(peaks, counts);
      if (err < best - 1e-12) best = err, best_theta = theta;
    }
    CHECK(r.relative_error == doctest::Approx(best).epsilon(1e-9));
    CHECK(r.calibration.theta == best_theta);
    CHECK_FALSE(r.from_incumbent);
  }
}

TEST_CASE("calibrate: exact linear relation is recovered") {
  // Envelopes with n well-separated unit peaks; counts = 2n + 1.
  std::vector<Envelope> envs;
  std::vector<int> counts;
  for (int n = 1; n <= 5; ++n) {
    std::vector<double> v{0.0};
    for (int k = 0; k < n; ++k) v.insert(v.end(), {1.0, 0.0});
    envs.push_back(env(v));
    counts.push_back(2 * n + 1);
  }
  const std::vector<double> grid{0.3, 0.5};
  const CalibrationResult r = calibrate(envs, counts, grid);
  CHECK(r.calibration.theta == 0.3);  // tie goes to the smaller theta
  CHECK(r.calibration.alpha == doctest::Approx(2.0));
  CHECK(r.calibration.beta == doctest::Approx(1.0));
  CHECK(r.relative_error == doctest::Approx(0.0));
}

TEST_CASE("calibrate: degenerate peak counts and single-theta grid") {
  std::vector<Envelope> envs(3, env({0, 1, 0}));
  const std::vector<int> counts{2, 4, 6};
  const std::vector<double> grid{0.5};
  const CalibrationResult r = calibrate(envs, counts, grid);
  CHECK(r.calibration.theta == 0.5);
  CHECK(r.calibration.alpha == 0.0);
  CHECK(r.calibration.beta == doctest::Approx(4.0));
  CHECK_THROWS_AS(calibrate(envs, counts, std::vector<double>{}), UsageError);
  CHECK_THROWS_AS(calibrate(std::span(envs).first(1), std::span(counts).first(1), grid), DataError);
  CHECK_THROWS_AS(calibrate(envs, std::vector<int>{1, 2}, grid), UsageError);
  CHECK_THROWS_AS(calibrate(envs, std::vector<int>{1, 0, 2}, grid), DataError);
}

TEST_CASE("calibrate: an incumbent is kept only when no grid point beats it") {
  std::vector<Envelope> envs{env({0, 1, 0, 1, 0}), env({0, 1, 0}), env({0, 1, 0, 1, 0, 1, 0})};
  const std::vector<int> counts{4, 2, 6};
  const std::vector<double> coarse{1.5};  // no peaks, so only a constant fit
  const EnvelopeCalibration perfect{0.5, 2.0, 0.0};
  const CalibrationResult kept = calibrate(envs, counts, coarse, perfect);
  CHECK(kept.from_incumbent);
  CHECK(kept.calibration == perfect);
  CHECK(kept.relative_error == 0.0);
  const EnvelopeCalibration poor{0.5, 1.0, 0.0};
  const CalibrationResult replaced = calibrate(envs, counts, coarse, poor);
  CHECK_FALSE(replaced.from_incumbent);
  CHECK(replaced.relative_error == doctest::Approx((0.0 + 1.0 + 1.0 / 3.0) / 3.0));
}

TEST_CASE("calibration files round trip and reject other envelope settings") {
  const auto dir = testing::scratch_dir("calibration");
  const BandEnergyEnvelope estimator;
  const EnvelopeCalibration cal{0.37, 1.25, -0.5};
  save_calibration(dir / "cal.json", cal, estimator);
  CHECK(load_calibration(dir / "cal.json", estimator) == cal);
  BandEnergyConfig other;
  other.smoothing_hz = 8.0;
  CHECK_THROWS_AS(load_calibration(dir / "cal.json", BandEnergyEnvelope(other)), DataError);
  CHECK_THROWS_AS(load_calibration(dir / "missing.json", estimator), DataError);
  std::ofstream(dir / "bad.json") << "{\"theta\": 1";
  CHECK_THROWS_AS(load_calibration(dir / "bad.json", estimator), DataError);
}

TEST_CASE("apply_calibration and default grid") {
  CHECK(apply_calibration(3, {0.2, 1.5, 0.25}) == doctest::Approx(4.75));
  const auto grid = default_theta_grid();
  REQUIRE(grid.size() == 101);
  CHECK(grid.front() == 0.0);
  CHECK(grid[37] == doctest::Approx(0.37));
  CHECK(grid.back() == 1.0);
}
