#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sylcount/wav.hpp"

namespace sylcount {

// Nonnegative sonority envelope sampled at a fixed hop.
struct Envelope {
  std::vector<double> values;
  double hop_ms = 10.0;
  std::string utterance_id;
};

struct EnvelopeCalibration {
  double theta = 0.0;
  double alpha = 1.0;
  double beta = 0.0;

  bool operator==(const EnvelopeCalibration&) const = default;
};

// Pluggable envelope stage. Implementations must be deterministic.
class EnvelopeEstimator {
 public:
  virtual ~EnvelopeEstimator() = default;
  virtual std::string name() const = 0;
  // Identifies every setting that affects compute(); stored with calibrations.
  virtual std::string config_key() const = 0;
  virtual Envelope compute(const Waveform& audio) const = 0;
};

struct BandEnergyConfig {
  int sample_rate_hz = 16000;
  double band_lo_hz = 300.0;
  double band_hi_hz = 2500.0;
  double smoothing_hz = 10.0;
  double hop_ms = 10.0;

  void validate() const;
  nlohmann::json to_json() const;
  static BandEnergyConfig from_json(const nlohmann::json& j);
};

// Band-pass, full-wave rectification, zero-phase low-pass smoothing, block
// averaging to the hop, then max-normalization to [0, 1]. Silence yields an
// all-zero envelope.
Envelope band_energy_envelope(const Waveform& audio, const BandEnergyConfig& config);

class BandEnergyEnvelope final : public EnvelopeEstimator {
 public:
  explicit BandEnergyEnvelope(BandEnergyConfig config = {}) : config_(config) { config_.validate(); }
  std::string name() const override { return "band_energy"; }
  std::string config_key() const override;
  Envelope compute(const Waveform& audio) const override {
    return band_energy_envelope(audio, config_);
  }

 private:
  BandEnergyConfig config_;
};

// Counts interior local maxima whose rise above the most recent preceding
// interior local minimum is at least theta. When no minimum precedes a
// maximum, the first sample is the reference. A flat run counts once.
int pick_peaks(std::span<const double> values, double theta);
inline int pick_peaks(const Envelope& envelope, double theta) {
  return pick_peaks(envelope.values, theta);
}

inline double apply_calibration(int n, const EnvelopeCalibration& cal) {
  return cal.alpha * n + cal.beta;
}

// {0.00, 0.01, ..., 1.00}.
std::vector<double> default_theta_grid();

struct CalibrationResult {
  EnvelopeCalibration calibration;
  double relative_error = 0.0;  // relative count error on the calibration data, unclamped
  bool from_incumbent = false;
};

// Exhaustive search over the grid with an ordinary least-squares fit of the
// counts on the peak counts at each theta; returns the triplet with the
// lowest relative count error (ties go to the smallest theta). When every peak count
// is equal at a theta, alpha = 0 and beta = mean count. An incumbent
// triplet, when given, is kept if no grid fit beats it.
CalibrationResult calibrate(std::span<const Envelope> envelopes, std::span<const int> counts,
                            std::span<const double> theta_grid,
                            std::optional<EnvelopeCalibration> incumbent = std::nullopt);

void save_calibration(const std::filesystem::path& path, const EnvelopeCalibration& cal,
                      const EnvelopeEstimator& estimator);
// Throws DataError when the stored envelope configuration differs from the
// estimator's.
EnvelopeCalibration load_calibration(const std::filesystem::path& path,
                                     const EnvelopeEstimator& estimator);

}  // namespace sylcount
