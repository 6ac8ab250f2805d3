#include "sylcount/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <unordered_map>

#include "sylcount/error.hpp"
#include "sylcount/random.hpp"

namespace sylcount {

double relative_error_pct(std::span<const double> predictions, std::span<const int> targets) {
  if (predictions.size() != targets.size())
    throw UsageError("relative_error_pct: predictions and targets differ in length");
  if (predictions.empty()) throw UsageError("relative_error_pct: empty input");
  double sum = 0.0;
  for (std::size_t u = 0; u < targets.size(); ++u) {
    if (targets[u] < 1) throw DataError("relative_error_pct: targets must be >= 1");
    sum += std::abs(std::max(predictions[u], 0.0) - targets[u]) / targets[u];
  }
  return 100.0 * sum / double(targets.size());
}

NeuralMethod::NeuralMethod(std::string name, std::shared_ptr<const CountModel> model,
                           TrainConfig adapt_config)
    : name_(std::move(name)), model_(std::move(model)), adapt_config_(adapt_config) {
  if (!model_) throw UsageError("NeuralMethod: null model");
  adapt_config_.validate();
}

std::vector<double> NeuralMethod::predict(std::span<const Sample> samples) const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) out.push_back(predict_count(*model_, s.input));
  return out;
}

std::unique_ptr<CountMethod> NeuralMethod::adapted(std::span<const Sample> adaptation_set,
                                                   std::uint64_t seed) const {
  std::vector<Example> examples;
  examples.reserve(adaptation_set.size());
  for (const Sample& s : adaptation_set) examples.push_back({s.id, s.input, s.count});
  std::shared_ptr<CountModel> copy = model_->clone();
  TrainConfig config = adapt_config_;
  config.seed = seed;
  adapt(*copy, examples, config);
  return std::make_unique<NeuralMethod>(name_, std::move(copy), adapt_config_);
}

std::optional<int> NeuralMethod::max_count() const {
  if (model_->head() == HeadKind::kOrdinal) return model_->rank() - 1;
  return std::nullopt;
}

EnvelopeMethod::EnvelopeMethod(std::string name, EnvelopeCalibration calibration,
                               std::vector<double> theta_grid)
    : name_(std::move(name)), calibration_(calibration), grid_(std::move(theta_grid)) {}

std::vector<double> EnvelopeMethod::predict(std::span<const Sample> samples) const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const Sample& s : samples)
    out.push_back(std::max(0.0, apply_calibration(pick_peaks(s.envelope, calibration_.theta),
                                                  calibration_)));
  return out;
}

std::unique_ptr<CountMethod> EnvelopeMethod::adapted(std::span<const Sample> adaptation_set,
                                                     std::uint64_t) const {
  std::vector<Envelope> envelopes;
  std::vector<int> counts;
  for (const Sample& s : adaptation_set) {
    envelopes.push_back(s.envelope);
    counts.push_back(s.count);
  }
  const CalibrationResult fit = calibrate(envelopes, counts, grid_, calibration_);
  return std::make_unique<EnvelopeMethod>(name_, fit.calibration, grid_);
}

std::vector<ExperimentSummary> ExperimentReport::summaries() const {
  std::map<std::pair<std::string, double>, std::vector<const ExperimentCell*>> groups;
  for (const ExperimentCell& c : cells) groups[{c.method, c.size_s}].push_back(&c);
  std::vector<ExperimentSummary> out;
  for (const std::string& method : methods) {
    std::vector<double> sizes{0.0};
    sizes.insert(sizes.end(), sizes_s.begin(), sizes_s.end());
    for (double size : sizes) {
      const auto it = groups.find({method, size});
      if (it == groups.end()) continue;
      ExperimentSummary s;
      s.method = method;
      s.size_s = size;
      std::vector<double> values;
      for (const ExperimentCell* c : it->second) {
        if (c->ok)
          values.push_back(c->error_pct);
        else
          ++s.folds_failed;
      }
      s.folds_ok = int(values.size());
      if (!values.empty()) {
        for (double v : values) s.mean_pct += v;
        s.mean_pct /= double(values.size());
        if (values.size() > 1) {
          double ss = 0.0;
          for (double v : values) ss += (v - s.mean_pct) * (v - s.mean_pct);
          s.std_pct = std::sqrt(ss / double(values.size() - 1));
        }
      } else {
        s.mean_pct = s.std_pct = std::nan("");
      }
      out.push_back(s);
    }
  }
  return out;
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json jc = nlohmann::json::array();
  for (const ExperimentCell& c : cells) {
    nlohmann::json cell = {{"method", c.method}, {"size_s", c.size_s}, {"fold", c.fold},
                           {"ok", c.ok}};
    if (c.ok) {
      cell["error_pct"] = c.error_pct;
      cell["saturated"] = c.saturated;
    } else {
      cell["diagnostic"] = c.diagnostic;
    }
    jc.push_back(std::move(cell));
  }
  nlohmann::json js = nlohmann::json::array();
  for (const ExperimentSummary& s : summaries())
    js.push_back({{"method", s.method},
                  {"size_s", s.size_s},
                  {"folds_ok", s.folds_ok},
                  {"folds_failed", s.folds_failed},
                  {"mean_pct", number_or_null(s.mean_pct)},
                  {"std_pct", number_or_null(s.std_pct)}});
  return {{"corpus", corpus}, {"seed", seed},     {"folds", folds},
          {"sizes_s", sizes_s}, {"methods", methods}, {"cells", jc},
          {"summary", js},      {"metadata", metadata}};
}

ExperimentReport ExperimentReport::from_json(const nlohmann::json& j) {
  ExperimentReport r;
  try {
    r.corpus = j.at("corpus").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.folds = j.at("folds").get<int>();
    r.sizes_s = j.at("sizes_s").get<std::vector<double>>();
    r.methods = j.at("methods").get<std::vector<std::string>>();
    if (j.contains("metadata")) r.metadata = j.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed experiment report header: ") + e.what());
  }
  const nlohmann::json& cells = j.contains("cells") ? j.at("cells") : nlohmann::json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    try {
      const nlohmann::json& c = cells.at(i);
      ExperimentCell cell;
      cell.method = c.at("method").get<std::string>();
      cell.size_s = c.at("size_s").get<double>();
      cell.fold = c.at("fold").get<int>();
      cell.ok = c.at("ok").get<bool>();
      if (cell.ok) {
        cell.error_pct = c.at("error_pct").get<double>();
        cell.saturated = c.value("saturated", 0);
        if (!(cell.error_pct >= 0.0)) throw DataError("negative or non-finite error_pct");
      } else {
        cell.diagnostic = c.value("diagnostic", "");
      }
      r.cells.push_back(std::move(cell));
    } catch (const std::exception& e) {
      throw DataError("malformed experiment report cell " + std::to_string(i) + ": " + e.what());
    }
  }
  return r;
}

void ExperimentReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report '" + path.string() + "'");
  out << to_json().dump(2) << '\n';
}

ExperimentReport ExperimentReport::read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("report '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void ExperimentReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  out << "method,size_s,fold,ok,error_pct,saturated,diagnostic\n";
  for (const ExperimentCell& c : cells) {
    std::string diag = c.diagnostic;
    std::replace(diag.begin(), diag.end(), '"', '\'');
    out << c.method << ',' << c.size_s << ',' << c.fold << ',' << (c.ok ? 1 : 0) << ',';
    if (c.ok) out << c.error_pct;
    out << ',' << c.saturated << ",\"" << diag << "\"\n";
  }
}

namespace {

std::vector<Sample> gather(const std::unordered_map<std::string, const Sample*>& index,
                           const std::vector<std::string>& ids) {
  std::vector<Sample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw DataError("split plan references unknown utterance '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

ExperimentCell evaluate_cell(const CountMethod& method, std::span<const Sample> test,
                             double size_s, int fold) {
  ExperimentCell cell;
  cell.method = method.name();
  cell.size_s = size_s;
  cell.fold = fold;
  const std::vector<double> predictions = method.predict(test);
  std::vector<int> targets;
  targets.reserve(test.size());
  for (const Sample& s : test) targets.push_back(s.count);
  cell.error_pct = relative_error_pct(predictions, targets);
  if (const auto limit = method.max_count()) {
    for (int t : targets) cell.saturated += t > *limit ? 1 : 0;
  }
  return cell;
}

}  // namespace

ExperimentReport run_adaptation_experiment(
    std::span<const CountMethod* const> methods, std::span<const Sample> samples,
    const SplitPlan& plan, const std::string& corpus_name,
    const std::function<void(const ExperimentProgress&)>& on_cell) {
  if (methods.empty()) throw UsageError("run_adaptation_experiment: no methods");
  if (plan.folds < 1) throw UsageError("run_adaptation_experiment: plan has no folds");
  std::unordered_map<std::string, const Sample*> index;
  for (const Sample& s : samples) index.emplace(s.id, &s);
  const std::vector<Sample> test = gather(index, plan.test_ids);
  if (test.empty()) throw DataError("run_adaptation_experiment: empty test set");

  ExperimentReport report;
  report.corpus = corpus_name;
  report.seed = plan.seed;
  report.folds = plan.folds;
  report.sizes_s = plan.sizes_s;
  for (const CountMethod* m : methods) {
    if (std::find(report.methods.begin(), report.methods.end(), m->name()) != report.methods.end())
      throw UsageError("run_adaptation_experiment: duplicate method name '" + m->name() + "'");
    report.methods.push_back(m->name());
  }

  const auto record = [&](ExperimentCell cell) {
    report.cells.push_back(std::move(cell));
    if (on_cell)
      on_cell({report.cells.back().method, report.cells.back().size_s, report.cells.back().fold,
               &report.cells.back()});
  };

  for (const CountMethod* method : methods) {
    ExperimentCell unadapted;
    unadapted.method = method->name();
    try {
      unadapted = evaluate_cell(*method, test, 0.0, 0);
    } catch (const std::exception& e) {
      unadapted.ok = false;
      unadapted.diagnostic = e.what();
    }
    for (int fold = 0; fold < plan.folds; ++fold) {
      ExperimentCell cell = unadapted;
      cell.fold = fold;
      record(std::move(cell));
    }
    for (double size : plan.sizes_s) {
      for (int fold = 0; fold < plan.folds; ++fold) {
        ExperimentCell cell;
        cell.method = method->name();
        cell.size_s = size;
        cell.fold = fold;
        try {
          const auto it = plan.adaptation_sets.find({size, fold});
          if (it == plan.adaptation_sets.end())
            throw DataError("split plan has no adaptation set for size " + size_label(size) +
                            " fold " + std::to_string(fold));
          const std::vector<Sample> adaptation = gather(index, it->second);
          const std::uint64_t seed =
              derive_seed(plan.seed, "experiment/" + method->name() + "/" + size_label(size),
                          std::uint64_t(fold));
          const std::unique_ptr<CountMethod> adapted = method->adapted(adaptation, seed);
          cell = evaluate_cell(*adapted, test, size, fold);
        } catch (const std::exception& e) {
          cell.ok = false;
          cell.diagnostic = e.what();
        }
        record(std::move(cell));
      }
    }
  }
  return report;
}

std::vector<double> trace_accumulation(const CountModel& model, const Eigen::MatrixXd& features) {
  const ForwardTrace trace = model.forward(features);
  std::vector<double> out(static_cast<std::size_t>(trace.per_frame_head.rows()));
  for (Eigen::Index t = 0; t < trace.per_frame_head.rows(); ++t)
    out[t] = reported_estimate(model.head(), trace.per_frame_head.row(t).transpose());
  return out;
}

}  // namespace sylcount
