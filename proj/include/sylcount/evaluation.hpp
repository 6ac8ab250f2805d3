#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sylcount/corpus.hpp"
#include "sylcount/envelope.hpp"
#include "sylcount/model.hpp"
#include "sylcount/training.hpp"

namespace sylcount {

// 100 x mean |max(p, 0) - s| / s.
double relative_error_pct(std::span<const double> predictions, std::span<const int> targets);

// Everything a method may need about one utterance. Neural methods read
// `input`, envelope methods read `envelope`.
struct Sample {
  std::string id;
  int count = 0;
  Eigen::MatrixXd input;
  Envelope envelope;
};

// A counting method that can be re-fitted on a small in-domain set.
class CountMethod {
 public:
  virtual ~CountMethod() = default;
  virtual std::string name() const = 0;
  // Reporting-time estimates.
  virtual std::vector<double> predict(std::span<const Sample> samples) const = 0;
  virtual std::unique_ptr<CountMethod> adapted(std::span<const Sample> adaptation_set,
                                               std::uint64_t seed) const = 0;
  // Largest count the method can output, if bounded (ordinal heads).
  virtual std::optional<int> max_count() const { return std::nullopt; }
};

class NeuralMethod final : public CountMethod {
 public:
  NeuralMethod(std::string name, std::shared_ptr<const CountModel> model, TrainConfig adapt_config);
  std::string name() const override { return name_; }
  std::vector<double> predict(std::span<const Sample> samples) const override;
  std::unique_ptr<CountMethod> adapted(std::span<const Sample> adaptation_set,
                                       std::uint64_t seed) const override;
  std::optional<int> max_count() const override;
  const CountModel& model() const { return *model_; }

 private:
  std::string name_;
  std::shared_ptr<const CountModel> model_;
  TrainConfig adapt_config_;
};

// Adaptation re-runs the exhaustive calibration on the adaptation set, with
// the current triplet as the incumbent.
class EnvelopeMethod final : public CountMethod {
 public:
  EnvelopeMethod(std::string name, EnvelopeCalibration calibration,
                 std::vector<double> theta_grid = default_theta_grid());
  std::string name() const override { return name_; }
  std::vector<double> predict(std::span<const Sample> samples) const override;
  std::unique_ptr<CountMethod> adapted(std::span<const Sample> adaptation_set,
                                       std::uint64_t seed) const override;
  const EnvelopeCalibration& calibration() const { return calibration_; }

 private:
  std::string name_;
  EnvelopeCalibration calibration_;
  std::vector<double> grid_;
};

struct ExperimentCell {
  std::string method;
  double size_s = 0.0;  // 0 = unadapted
  int fold = 0;
  bool ok = true;
  double error_pct = 0.0;
  // Test utterances whose count exceeds what the method can output.
  int saturated = 0;
  std::string diagnostic;
};

struct ExperimentSummary {
  std::string method;
  double size_s = 0.0;
  int folds_ok = 0;
  int folds_failed = 0;
  double mean_pct = 0.0;
  double std_pct = 0.0;  // sample standard deviation over successful folds
};

struct ExperimentReport {
  std::string corpus;
  std::uint64_t seed = 0;
  int folds = 0;
  std::vector<double> sizes_s;
  std::vector<std::string> methods;
  std::vector<ExperimentCell> cells;
  nlohmann::json metadata = nlohmann::json::object();

  std::vector<ExperimentSummary> summaries() const;
  nlohmann::json to_json() const;
  // Throws DataError naming the offending cell.
  static ExperimentReport from_json(const nlohmann::json& j);
  void write_json(const std::filesystem::path& path) const;
  static ExperimentReport read_json(const std::filesystem::path& path);
  // One row per cell.
  void write_csv(const std::filesystem::path& path) const;
};

struct ExperimentProgress {
  std::string method;
  double size_s = 0.0;
  int fold = 0;
  const ExperimentCell* cell = nullptr;
};

// For every method, size and fold: adapt on the fold's adaptation set and
// evaluate on the plan's test set. The unadapted error is computed once per
// method and recorded for every fold. Failures become cells with ok = false.
ExperimentReport run_adaptation_experiment(
    std::span<const CountMethod* const> methods, std::span<const Sample> samples,
    const SplitPlan& plan, const std::string& corpus_name,
    const std::function<void(const ExperimentProgress&)>& on_cell = {});

// Per-frame decoded estimate (the accumulation curve). The last element is
// the utterance estimate.
std::vector<double> trace_accumulation(const CountModel& model, const Eigen::MatrixXd& features);

}  // namespace sylcount
