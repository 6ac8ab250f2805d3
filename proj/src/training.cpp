#include "sylcount/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sylcount/error.hpp"
#include "sylcount/logging.hpp"

namespace sylcount {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

const char* to_string(LossKind loss) {
  return loss == LossKind::kL1Relative ? "l1_relative" : "ordinal";
}

LossKind loss_from_string(const std::string& text) {
  if (text == "l1_relative") return LossKind::kL1Relative;
  if (text == "ordinal") return LossKind::kOrdinal;
  throw UsageError("unknown loss '" + text + "' (expected l1_relative or ordinal)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw UsageError("train: lr must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw UsageError("train: Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw UsageError("train: Adam epsilon must be positive");
  if (batch_size < 1) throw UsageError("train: batch_size must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw UsageError("train: dropout_rate must lie in [0, 1)");
  if (early_stop_patience < 1) throw UsageError("train: early_stop_patience must be >= 1");
  if (max_epochs < 1) throw UsageError("train: max_epochs must be >= 1");
  if (max_steps < 0) throw UsageError("train: max_steps must be >= 0");
  if (!(target_error >= 0.0)) throw UsageError("train: target_error must be >= 0");
  if (!(adapt_holdout_fraction > 0.0 && adapt_holdout_fraction < 1.0))
    throw UsageError("train: adapt_holdout_fraction must lie in (0, 1)");
}

json TrainConfig::to_json() const {
  return json{{"lr", lr},
              {"adam_beta1", adam_beta1},
              {"adam_beta2", adam_beta2},
              {"adam_epsilon", adam_epsilon},
              {"batch_size", batch_size},
              {"dropout_rate", dropout_rate},
              {"early_stop_patience", early_stop_patience},
              {"max_epochs", max_epochs},
              {"max_steps", max_steps},
              {"target_error", target_error},
              {"seed", seed},
              {"loss", to_string(loss)},
              {"adapt_holdout_fraction", adapt_holdout_fraction}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.lr = j.at("lr").get<double>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.early_stop_patience = j.at("early_stop_patience").get<int>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.max_steps = j.at("max_steps").get<long>();
    c.target_error = j.at("target_error").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.loss = loss_from_string(j.at("loss").get<std::string>());
    c.adapt_holdout_fraction = j.at("adapt_holdout_fraction").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed training configuration: ") + e.what());
  }
  c.validate();
  return c;
}

void TrainLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log '" + path.string() + "'");
  for (const auto& e : epochs) {
    out << json{{"epoch", e.epoch},
                {"train_loss", e.train_loss},
                {"stop_error", e.stop_error},
                {"steps", e.steps}}
               .dump()
        << '\n';
  }
}

void TrainLog::write_summary(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training summary '" + path.string() + "'");
  const int last = epochs.empty() ? 0 : epochs.back().epoch;
  out << json{{"best_epoch", best_epoch},
              {"best_stop_error", best_stop_error},
              {"last_epoch", last},
              {"early_stopped", early_stopped},
              {"reached_target", reached_target},
              {"stopping_set", stopping_set},
              {"steps", epochs.empty() ? 0 : epochs.back().steps}}
             .dump(2)
      << '\n';
}

void TrainLog::write_timing(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write timing log '" + path.string() + "'");
  for (const auto& e : epochs) out << json{{"epoch", e.epoch}, {"seconds", e.seconds}}.dump() << '\n';
}

Adam::Adam(const ParamSet& like, double lr, double beta1, double beta2, double epsilon)
    : lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon), m_(like.zeros_like()),
      v_(like.zeros_like()) {}

void Adam::step(ParamSet& params, const ParamSet& grads, const std::vector<bool>& trainable) {
  ++steps_;
  const double correction1 = 1.0 - std::pow(beta1_, double(steps_));
  const double correction2 = 1.0 - std::pow(beta2_, double(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!trainable[i]) continue;
    auto m = m_[i].array();
    auto v = v_[i].array();
    const auto g = grads[i].array();
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g * g;
    params[i].array() -= lr_ * (m / correction1) / ((v / correction2).sqrt() + epsilon_);
  }
}

double batch_loss(const CountModel& model, LossKind loss, std::span<const ForwardTrace> traces,
                  std::span<const int> targets) {
  BatchPrediction batch;
  batch.head = model.head();
  for (const auto& t : traces) batch.estimates.push_back(t.final_estimate.transpose());
  batch.targets.assign(targets.begin(), targets.end());
  if (loss == LossKind::kL1Relative) return l1_relative_loss(batch);
  std::vector<OrdinalTarget> encoded;
  for (int s : targets) encoded.push_back(encode_ordinal(s, model.rank()));
  return ordinal_loss(batch, encoded);
}

namespace {

void check_compatible(const CountModel& model, LossKind loss) {
  if (loss == LossKind::kL1Relative && model.head() != HeadKind::kScalar)
    throw UsageError("l1_relative loss requires a scalar head");
  if (loss == LossKind::kOrdinal && model.head() != HeadKind::kOrdinal)
    throw UsageError("ordinal loss requires an ordinal head");
}

// Per-example head gradient of the minibatch loss (includes the 1/M factor).
HeadGradient make_head_gradient(const CountModel& model, LossKind loss, int target,
                                std::size_t batch_size, double* loss_term) {
  const int rank = model.rank();
  const HeadKind head = model.head();
  return [=](const VectorXd& out) -> VectorXd {
    BatchPrediction single;
    single.head = head;
    single.estimates.push_back(out);
    single.targets.push_back(target);
    VectorXd g;
    if (loss == LossKind::kL1Relative) {
      *loss_term = l1_relative_loss(single);
      g = l1_relative_gradient(single)[0];
    } else {
      const OrdinalTarget t = encode_ordinal(target, rank);
      *loss_term = ordinal_loss(single, std::span<const OrdinalTarget>(&t, 1));
      g = ordinal_loss_gradient(single, std::span<const OrdinalTarget>(&t, 1))[0];
    }
    return g / static_cast<double>(batch_size);
  };
}

// Training data as seen by the optimization loop: either raw features (full
// backpropagation) or frozen encodings (tunable partition only).
struct FitSource {
  std::size_t size = 0;
  std::function<int(std::size_t)> count;
  std::function<VectorXd(std::size_t, nn::Dropout, const HeadGradient&, ParamSet&)> step;
  std::function<double(std::size_t)> predict;
};

double source_error(const FitSource& src) {
  std::vector<double> preds(src.size);
  std::vector<int> targets(src.size);
  for (std::size_t i = 0; i < src.size; ++i) {
    preds[i] = src.predict(i);
    targets[i] = src.count(i);
  }
  return relative_error(preds, targets);
}

TrainLog fit(CountModel& model, const FitSource& train_src, const FitSource& stop_src,
             const std::vector<bool>& trainable, const TrainConfig& config,
             const std::string& stopping_set, const EpochCallback& on_epoch) {
  using Clock = std::chrono::steady_clock;
  TrainLog log;
  log.stopping_set = stopping_set;
  Adam adam(model.params(), config.lr, config.adam_beta1, config.adam_beta2, config.adam_epsilon);
  ParamSet grads = model.params().zeros_like();

  EpochRecord initial;
  initial.stop_error = source_error(stop_src);
  log.epochs.push_back(initial);
  log.best_epoch = 0;
  log.best_stop_error = initial.stop_error;
  ParamSet best = model.params();
  if (on_epoch) on_epoch(initial, true, model);

  std::vector<std::size_t> order(train_src.size);
  std::iota(order.begin(), order.end(), 0);
  bool step_limit_hit = false;
  for (int epoch = 1; epoch <= config.max_epochs && !step_limit_hit; ++epoch) {
    const auto start = Clock::now();
    Rng shuffle_rng(derive_seed(config.seed, "train/shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0, batch = 0; begin < order.size(); begin += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      const std::size_t m = end - begin;
      grads.set_zero();
      double batch_sum = 0.0;
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t i = order[k];
        Rng dropout_rng(derive_seed(derive_seed(config.seed, "train/dropout",
                                                static_cast<std::uint64_t>(adam.steps())),
                                    "example", k - begin));
        double term = 0.0;
        const HeadGradient hg = make_head_gradient(model, config.loss, train_src.count(i), m, &term);
        try {
          train_src.step(i, nn::Dropout{config.dropout_rate, &dropout_rng}, hg, grads);
        } catch (const NumericError& e) {
          throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                             ": " + e.what());
        }
        batch_sum += term;
      }
      const double batch_loss_value = batch_sum / static_cast<double>(m);
      if (!std::isfinite(batch_loss_value) || !grads.all_finite())
        throw NumericError("non-finite loss or gradient in epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch));
      adam.step(model.params(), grads, trainable);
      loss_sum += batch_sum;
      seen += m;
      if (config.max_steps > 0 && adam.steps() >= config.max_steps) {
        step_limit_hit = true;
        break;
      }
    }
    if (!model.params().all_finite())
      throw NumericError("parameters became non-finite in epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.stop_error = source_error(stop_src);
    rec.steps = adam.steps();
    rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    log.epochs.push_back(rec);
    const bool improved = rec.stop_error < log.best_stop_error;
    if (improved) {
      log.best_epoch = epoch;
      log.best_stop_error = rec.stop_error;
      best = model.params();
    }
    if (on_epoch) on_epoch(rec, improved, model);
    if (config.target_error > 0.0 && rec.stop_error <= config.target_error) {
      log.reached_target = true;
      break;
    }
    if (epoch - log.best_epoch >= config.early_stop_patience) {
      log.early_stopped = true;
      break;
    }
  }
  model.params() = best;
  return log;
}

FitSource full_source(const CountModel& model, std::span<const Example> examples) {
  FitSource src;
  src.size = examples.size();
  src.count = [examples](std::size_t i) { return examples[i].count; };
  src.step = [&model, examples](std::size_t i, nn::Dropout d, const HeadGradient& hg, ParamSet& g) {
    return model.forward_backward(examples[i].input, d, hg, g);
  };
  src.predict = [&model, examples](std::size_t i) { return predict_count(model, examples[i].input); };
  return src;
}

FitSource frozen_source(const CountModel& model, const std::vector<FrozenEncoding>& encodings,
                        const std::vector<int>& counts, std::vector<std::size_t> subset) {
  FitSource src;
  src.size = subset.size();
  src.count = [&counts, subset](std::size_t i) { return counts[subset[i]]; };
  src.step = [&model, &encodings, subset](std::size_t i, nn::Dropout d, const HeadGradient& hg,
                                          ParamSet& g) {
    return model.forward_backward_from_frozen(encodings[subset[i]], d, hg, g);
  };
  src.predict = [&model, &encodings, subset](std::size_t i) {
    const ForwardTrace t = model.forward_from_frozen(encodings[subset[i]], {});
    return reported_estimate(model.head(), t.final_estimate.transpose());
  };
  return src;
}

void check_examples(const CountModel& model, std::span<const Example> examples, const char* what) {
  for (const auto& e : examples) {
    if (e.count < 1) throw DataError(std::string(what) + ": example '" + e.id + "' has count < 1");
    if (e.input.cols() != model.input_dim())
      throw DataError(std::string(what) + ": example '" + e.id + "' has feature width " +
                      std::to_string(e.input.cols()) + ", model expects " +
                      std::to_string(model.input_dim()));
  }
}

}  // namespace

TrainLog train(CountModel& model, std::span<const Example> train_set,
               std::span<const Example> val_set, const TrainConfig& config,
               const EpochCallback& on_epoch) {
  config.validate();
  check_compatible(model, config.loss);
  if (train_set.empty()) throw DataError("train: empty training set");
  check_examples(model, train_set, "train");
  check_examples(model, val_set, "train");
  const FitSource train_src = full_source(model, train_set);
  std::vector<bool> trainable(model.params().size(), true);
  if (val_set.empty()) {
    warn("train: no validation data; early stopping monitors the training set");
    return fit(model, train_src, train_src, trainable, config, "train", on_epoch);
  }
  return fit(model, train_src, full_source(model, val_set), trainable, config, "validation",
             on_epoch);
}

TrainLog adapt(CountModel& model, std::span<const Example> adaptation_set,
               const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  check_compatible(model, config.loss);
  if (adaptation_set.empty()) throw DataError("adapt: empty adaptation set");
  check_examples(model, adaptation_set, "adapt");

  const ParamPartition part = model.partition();
  std::vector<bool> trainable(model.params().size(), false);
  for (const auto& name : part.tunable) trainable[model.params().index_of(name)] = true;

  std::vector<FrozenEncoding> encodings;
  std::vector<int> counts;
  encodings.reserve(adaptation_set.size());
  for (const auto& e : adaptation_set) {
    encodings.push_back(model.encode_frozen(e.input));
    counts.push_back(e.count);
  }

  std::vector<std::size_t> order(adaptation_set.size());
  std::iota(order.begin(), order.end(), 0);
  if (adaptation_set.size() < 5) {
    warn("adapt: fewer than 5 adaptation utterances; early stopping monitors the training loss");
    const FitSource src = frozen_source(model, encodings, counts, order);
    return fit(model, src, src, trainable, config, "train", on_epoch);
  }
  Rng rng(derive_seed(config.seed, "adapt/holdout"));
  rng.shuffle(order);
  const auto n_holdout = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(config.adapt_holdout_fraction * order.size())));
  std::vector<std::size_t> holdout(order.begin(), order.begin() + n_holdout);
  std::vector<std::size_t> fit_part(order.begin() + n_holdout, order.end());
  std::sort(holdout.begin(), holdout.end());
  std::sort(fit_part.begin(), fit_part.end());
  return fit(model, frozen_source(model, encodings, counts, fit_part),
             frozen_source(model, encodings, counts, holdout), trainable, config, "holdout",
             on_epoch);
}

std::vector<double> predict_counts(const CountModel& model, std::span<const Example> examples) {
  std::vector<double> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(predict_count(model, e.input));
  return out;
}

int ordinal_rank_for(std::span<const Example> train_set) {
  int max_count = 1;
  for (const auto& e : train_set) max_count = std::max(max_count, e.count);
  return max_count + 1;
}

}  // namespace sylcount
