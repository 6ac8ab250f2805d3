#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sylcount/model.hpp"

namespace sylcount {

enum class LossKind { kL1Relative, kOrdinal };

const char* to_string(LossKind loss);
LossKind loss_from_string(const std::string& text);

struct TrainConfig {
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 32;
  double dropout_rate = 0.5;
  int early_stop_patience = 10;
  int max_epochs = 200;
  // Stop after this many optimizer steps (0 = no limit).
  long max_steps = 0;
  // Stop once the stopping-set error is at or below this value (0 = never).
  double target_error = 0.0;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kL1Relative;
  // Held-out share of the adaptation set used for early stopping.
  double adapt_holdout_fraction = 0.2;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// One training utterance: model-ready (normalized) features and its count.
struct Example {
  std::string id;
  Eigen::MatrixXd input;
  int count = 0;
};

struct EpochRecord {
  int epoch = 0;            // 0 is the evaluation before any update
  double train_loss = 0.0;  // mean training-mode minibatch loss
  double stop_error = 0.0;  // mean relative count error on the stopping set
  long steps = 0;           // cumulative optimizer steps
  double seconds = 0.0;     // wall clock for the epoch
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_stop_error = 0.0;
  bool early_stopped = false;
  bool reached_target = false;
  // "validation", "holdout" or "train": which set drove early stopping.
  std::string stopping_set;

  // One JSON object per epoch. Wall-clock time is omitted so the log is
  // reproducible; write_timing emits it separately.
  void write_jsonl(const std::filesystem::path& path) const;
  void write_summary(const std::filesystem::path& path) const;
  void write_timing(const std::filesystem::path& path) const;
};

// Called after each epoch's evaluation; `improved` marks a new best.
using EpochCallback =
    std::function<void(const EpochRecord& record, bool improved, const CountModel& model)>;

// Bias-corrected Adam. Tensors flagged as not trainable are never touched.
class Adam {
 public:
  Adam(const ParamSet& like, double lr, double beta1, double beta2, double epsilon);
  void step(ParamSet& params, const ParamSet& grads, const std::vector<bool>& trainable);
  long steps() const { return steps_; }

 private:
  double lr_, beta1_, beta2_, epsilon_;
  long steps_ = 0;
  ParamSet m_, v_;
};

// Minibatch loss computed from the final frame of each trace only.
double batch_loss(const CountModel& model, LossKind loss, std::span<const ForwardTrace> traces,
                  std::span<const int> targets);

// Trains every tensor. Early stopping monitors the relative error on val_set (or on the
// training set, with a warning, when val_set is empty); the parameters from
// the best epoch are restored before returning.
TrainLog train(CountModel& model, std::span<const Example> train_set,
               std::span<const Example> val_set, const TrainConfig& config,
               const EpochCallback& on_epoch = {});

// Retrains only the tunable partition on cached frozen encodings. Early
// stopping uses a held-out share of the adaptation set; with fewer than 5
// utterances the training loss is monitored instead (with a warning).
TrainLog adapt(CountModel& model, std::span<const Example> adaptation_set,
               const TrainConfig& config, const EpochCallback& on_epoch = {});

// Reporting-time estimates for every example.
std::vector<double> predict_counts(const CountModel& model, std::span<const Example> examples);

// Rank for an ordinal head: the largest training count plus one.
int ordinal_rank_for(std::span<const Example> train_set);

}  // namespace sylcount
