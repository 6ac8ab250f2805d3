#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sylcount/blstm.hpp"
#include "sylcount/checkpoint.hpp"
#include "sylcount/config.hpp"
#include "sylcount/corpus.hpp"
#include "sylcount/envelope.hpp"
#include "sylcount/error.hpp"
#include "sylcount/evaluation.hpp"
#include "sylcount/features.hpp"
#include "sylcount/logging.hpp"
#include "sylcount/plot.hpp"
#include "sylcount/random.hpp"
#include "sylcount/sylnet.hpp"
#include "sylcount/synth.hpp"
#include "sylcount/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sylcount;

namespace {

// ---------------------------------------------------------------------------
// Configuration

json model_section(json j) {
  // Derived from other sections at run time.
  j.erase("input_dim");
  j.erase("dropout_rate");
  return j;
}

json train_section(const TrainConfig& c) {
  json j = c.to_json();
  j.erase("seed");
  j["loss"] = "auto";
  return j;
}

json default_config() {
  json synth = SynthConfig{}.to_json();
  synth.erase("seed");
  TrainConfig adapt_defaults;
  adapt_defaults.max_epochs = 100;
  return {
      {"seed", 0},
      {"features", FeatureConfig{}.to_json()},
      {"envelope", BandEnergyConfig{}.to_json()},
      {"model",
       {{"kind", "sylnet"},
        {"sylnet", model_section(SylNetConfig{}.to_json())},
        {"blstm_count", model_section(BlstmCountConfig{}.to_json())}}},
      {"train", train_section(TrainConfig{})},
      {"adapt", train_section(adapt_defaults)},
      {"validation_fraction", 0.1},
      {"split", {{"test_fraction", 0.5}, {"sizes_s", geometric_sizes()}, {"folds", 5}}},
      {"synth", synth},
  };
}

// Typed views of the resolved configuration. Malformed values are usage
// errors at this level.
template <typename F>
auto typed(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  } catch (const json::exception& e) {
    throw UsageError(std::string("configuration: ") + e.what());
  }
}

std::uint64_t seed_of(const json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

FeatureConfig feature_config(const json& cfg) {
  return typed([&] { return FeatureConfig::from_json(cfg.at("features")); });
}

BandEnergyConfig envelope_config(const json& cfg) {
  return typed([&] { return BandEnergyConfig::from_json(cfg.at("envelope")); });
}

TrainConfig train_config(const json& cfg, const std::string& section, HeadKind head) {
  return typed([&] {
    json j = cfg.at(section);
    if (j.at("loss") == "auto") j["loss"] = head == HeadKind::kOrdinal ? "ordinal" : "l1_relative";
    j["seed"] = derive_seed(seed_of(cfg), section);
    return TrainConfig::from_json(j);
  });
}

HeadKind configured_head(const json& cfg) {
  return typed([&] {
    const std::string kind = cfg.at("model").at("kind").get<std::string>();
    if (kind == "sylnet") return head_from_string(cfg.at("model").at("sylnet").at("head"));
    if (kind == "blstm_count") return HeadKind::kScalar;
    throw UsageError("model.kind must be 'sylnet' or 'blstm_count', got '" + kind + "'");
  });
}

std::unique_ptr<CountModel> build_model(const json& cfg, std::span<const Example> train_set) {
  return typed([&]() -> std::unique_ptr<CountModel> {
    const std::string kind = cfg.at("model").at("kind").get<std::string>();
    json m = cfg.at("model").at(kind);
    m["input_dim"] = cfg.at("features").at("n_mels");
    m["dropout_rate"] = cfg.at("train").at("dropout_rate");
    if (kind == "sylnet" && m.at("head") == "ordinal" && m.at("rank").get<int>() == 0)
      m["rank"] = ordinal_rank_for(train_set);
    return make_model(kind, m, derive_seed(seed_of(cfg), "model/init"));
  });
}

SynthConfig synth_config(const json& cfg) {
  return typed([&] {
    json j = cfg.at("synth");
    j["seed"] = derive_seed(seed_of(cfg), "synth");
    return SynthConfig::from_json(j);
  });
}

struct ConfigOptions {
  std::vector<std::string> files;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void add_config_options(CLI::App* cmd, ConfigOptions& opts) {
  cmd->add_option("--config", opts.files,
                  "JSON configuration file; later files override earlier ones")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", opts.overrides, "override one key, e.g. --set train.lr=0.001");
  cmd->add_option("--seed", opts.seed, "master random seed (same as --set seed=N)");
}

json resolve_config(const ConfigOptions& opts) {
  json cfg = default_config();
  for (const std::string& f : opts.files) merge_config_file(cfg, f);
  for (const std::string& o : opts.overrides) apply_override(cfg, o);
  if (opts.seed) cfg["seed"] = *opts.seed;
  // Surface invalid values before any work starts.
  feature_config(cfg);
  envelope_config(cfg);
  const HeadKind head = configured_head(cfg);
  train_config(cfg, "train", head);
  train_config(cfg, "adapt", head);
  synth_config(cfg);
  const double vf = cfg.at("validation_fraction").get<double>();
  if (!(vf > 0.0 && vf < 1.0)) throw UsageError("validation_fraction must lie in (0, 1)");
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_snapshot(const fs::path& dir, const json& cfg) {
  write_json(dir / "resolved_config.json", cfg);
}

// ---------------------------------------------------------------------------
// Data

fs::path default_cache_dir(const fs::path& manifest) {
  return fs::absolute(manifest).parent_path() / "feature_cache";
}

std::vector<Example> load_examples(const CorpusManifest& manifest, const FeatureConfig& features,
                                   const fs::path& cache_dir) {
  CacheStats stats;
  std::vector<Example> out;
  out.reserve(manifest.utterances.size());
  for (const Utterance& u : manifest.utterances) {
    FeatureMatrix f = normalize_features(cached_extract(u, features, cache_dir, &stats), features);
    if (f.frames() == 0) throw DataError("utterance '" + u.id + "' is shorter than one frame");
    out.push_back({u.id, std::move(f.values), u.syllable_count});
  }
  std::cerr << "features: " << stats.computed.load() << " computed, " << stats.hits.load()
            << " cached\n";
  return out;
}

std::vector<Example> select(const std::vector<Example>& all, const std::vector<std::string>& ids) {
  std::map<std::string, const Example*> index;
  for (const Example& e : all) index.emplace(e.id, &e);
  std::vector<Example> out;
  for (const std::string& id : ids) out.push_back(*index.at(id));
  return out;
}

Envelope envelope_for(const Utterance& u, const BandEnergyConfig& config) {
  Envelope env = band_energy_envelope(load_audio(u.audio_path, config.sample_rate_hz), config);
  env.utterance_id = u.id;
  return env;
}

// Files and directories (searched recursively for *.wav) in a stable order.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const std::string& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::recursive_directory_iterator(p)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
        if (ext == ".wav") found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Subcommands

struct Paths {
  std::string manifest, val_manifest, out, cache_dir, checkpoint, calibration, report;
  std::vector<std::string> inputs, traces, models, envelopes;
  std::string trace_dir;
};

fs::path cache_dir_for(const Paths& p) {
  return p.cache_dir.empty() ? default_cache_dir(p.manifest) : fs::path(p.cache_dir);
}

int cmd_synth(const json& cfg, const Paths& p) {
  const SynthConfig sc = synth_config(cfg);
  const fs::path out(p.out);
  write_snapshot(out, cfg);
  const CorpusManifest m = synthesize_corpus(sc, out);
  std::cerr << "synth: wrote " << m.utterances.size() << " utterances ("
            << m.total_duration_s() << " s) to " << (out / "manifest.jsonl").string() << "\n";
  return 0;
}

int cmd_extract(const json& cfg, const Paths& p) {
  const FeatureConfig fc = feature_config(cfg);
  const CorpusManifest manifest = load_manifest(p.manifest);
  const fs::path out(p.out);
  write_snapshot(out, cfg);
  CacheStats stats;
  std::ostringstream index;
  for (const Utterance& u : manifest.utterances) {
    const FeatureMatrix f = cached_extract(u, fc, out, &stats);
    index << json{{"id", u.id}, {"frames", f.frames()}, {"dims", f.dims()}}.dump() << "\n";
  }
  write_text(out / "index.jsonl", index.str());
  std::cerr << "extract: " << stats.computed.load() << " computed, " << stats.hits.load()
            << " cached, " << stats.repaired.load() << " repaired\n";
  return 0;
}

int cmd_train(const json& cfg, const Paths& p) {
  const FeatureConfig fc = feature_config(cfg);
  const CorpusManifest manifest = load_manifest(p.manifest);
  const fs::path out(p.out);
  write_snapshot(out, cfg);

  std::vector<Example> train_set, val_set;
  if (!p.val_manifest.empty()) {
    const CorpusManifest val = load_manifest(p.val_manifest);
    train_set = load_examples(manifest, fc, cache_dir_for(p));
    val_set = load_examples(val, fc, p.cache_dir.empty() ? default_cache_dir(p.val_manifest)
                                                         : fs::path(p.cache_dir));
  } else {
    const ValidationSplit split = split_validation(
        manifest, cfg.at("validation_fraction").get<double>(), derive_seed(seed_of(cfg), "validation"));
    write_json(out / "validation_split.json", {{"speaker_disjoint", split.speaker_disjoint},
                                               {"train_ids", split.train_ids},
                                               {"validation_ids", split.validation_ids}});
    const std::vector<Example> all = load_examples(manifest, fc, cache_dir_for(p));
    train_set = select(all, split.train_ids);
    val_set = select(all, split.validation_ids);
  }

  std::unique_ptr<CountModel> model = build_model(cfg, train_set);
  const TrainConfig tc = train_config(cfg, "train", model->head());
  const fs::path ckpt = out / "model.ckpt";
  const TrainLog log = train(*model, train_set, val_set, tc,
                             [&](const EpochRecord& r, bool improved, const CountModel& m) {
                               std::cerr << "epoch " << r.epoch << " loss " << r.train_loss
                                         << " val_error " << r.stop_error
                                         << (improved ? " *" : "") << "\n";
                               if (improved) save_checkpoint(ckpt, m, fc);
                             });
  save_checkpoint(ckpt, *model, fc);
  log.write_jsonl(out / "train_log.jsonl");
  log.write_summary(out / "train_summary.json");
  log.write_timing(out / "timing.json");
  std::cerr << "train: best epoch " << log.best_epoch << ", " << log.stopping_set
            << " error " << 100.0 * log.best_stop_error << "%\n";
  return 0;
}

int cmd_adapt(const json& cfg, const Paths& p) {
  LoadedModel loaded = load_checkpoint(p.checkpoint);
  const CorpusManifest manifest = load_manifest(p.manifest);
  const fs::path out(p.out);
  write_snapshot(out, cfg);
  const std::vector<Example> set = load_examples(manifest, loaded.features, cache_dir_for(p));
  const TrainConfig tc = train_config(cfg, "adapt", loaded.model->head());
  const TrainLog log = adapt(*loaded.model, set, tc, [](const EpochRecord& r, bool improved, const CountModel&) {
    std::cerr << "epoch " << r.epoch << " loss " << r.train_loss << " stop_error " << r.stop_error
              << (improved ? " *" : "") << "\n";
  });
  save_checkpoint(out / "model.ckpt", *loaded.model, loaded.features);
  log.write_jsonl(out / "adapt_log.jsonl");
  log.write_summary(out / "adapt_summary.json");
  log.write_timing(out / "timing.json");
  return 0;
}

int cmd_count(const json& cfg, const Paths& p) {
  std::vector<fs::path> files = expand_inputs(p.inputs);
  std::map<fs::path, int> references;
  if (!p.manifest.empty()) {
    const CorpusManifest manifest = load_manifest(p.manifest);
    for (const Utterance& u : manifest.utterances) {
      files.push_back(u.audio_path);
      references[u.audio_path] = u.syllable_count;
    }
  }
  if (files.empty()) throw UsageError("count: no audio inputs given");
  const LoadedModel loaded = load_checkpoint(p.checkpoint);
  const fs::path trace_dir(p.trace_dir);
  if (!p.trace_dir.empty()) write_snapshot(trace_dir, cfg);

  int failures = 0;
  std::cout.precision(6);
  for (std::size_t i = 0; i < files.size(); ++i) {
    const fs::path& file = files[i];
    try {
      const Waveform audio = load_audio(file, loaded.features.sample_rate_hz);
      const FeatureMatrix f =
          normalize_features(extract_features(audio, loaded.features), loaded.features);
      if (f.frames() == 0) throw DataError("shorter than one analysis window");
      const ForwardTrace trace = loaded.model->forward(f.values);
      const Eigen::VectorXd final_output = trace.final_estimate.transpose();
      const double raw = loaded.model->head() == HeadKind::kScalar ? final_output(0)
                                                                    : final_output.sum();
      const double estimate = reported_estimate(loaded.model->head(), final_output);
      std::cout << file.string() << '\t' << std::lround(estimate) << '\t' << raw << '\n';
      if (!p.trace_dir.empty()) {
        AccumulationTrace t;
        t.id = file.stem().string();
        t.hop_ms = loaded.features.hop_ms;
        t.values = trace_accumulation(*loaded.model, f.values);
        if (const auto it = references.find(file); it != references.end()) t.reference = it->second;
        char prefix[16];
        std::snprintf(prefix, sizeof prefix, "%05zu_", i);
        write_text(trace_dir / (prefix + t.id + ".trace.csv"), trace_csv(t));
      }
    } catch (const NumericError&) {
      throw;
    } catch (const Error& e) {
      ++failures;
      std::cout << file.string() << "\terror\t" << e.what() << '\n';
    }
  }
  std::cout.flush();
  if (failures > 0) {
    std::cerr << "count: " << failures << " of " << files.size() << " inputs failed\n";
    return static_cast<int>(ExitCode::kData);
  }
  return 0;
}

int cmd_calibrate(const json& cfg, const Paths& p) {
  const BandEnergyEnvelope estimator(envelope_config(cfg));
  const BandEnergyConfig ec = envelope_config(cfg);
  const CorpusManifest manifest = load_manifest(p.manifest);
  const fs::path out(p.out);
  write_snapshot(out, cfg);
  std::vector<Envelope> envelopes;
  std::vector<int> counts;
  for (const Utterance& u : manifest.utterances) {
    envelopes.push_back(envelope_for(u, ec));
    counts.push_back(u.syllable_count);
  }
  const CalibrationResult fit = calibrate(envelopes, counts, default_theta_grid());
  save_calibration(out / "calibration.json", fit.calibration, estimator);
  std::cout << "theta " << fit.calibration.theta << " alpha " << fit.calibration.alpha << " beta "
            << fit.calibration.beta << " error " << 100.0 * fit.relative_error << "%\n";
  return 0;
}

int cmd_evaluate(const json& cfg, const Paths& p) {
  if (p.checkpoint.empty() == p.calibration.empty())
    throw UsageError("evaluate: give exactly one of --checkpoint or --calibration");
  const CorpusManifest manifest = load_manifest(p.manifest);
  const fs::path out(p.out);
  write_snapshot(out, cfg);

  std::vector<double> estimates;
  std::vector<int> targets;
  int saturated = 0;
  if (!p.checkpoint.empty()) {
    const LoadedModel loaded = load_checkpoint(p.checkpoint);
    const std::vector<Example> set = load_examples(manifest, loaded.features, cache_dir_for(p));
    estimates = predict_counts(*loaded.model, set);
    for (const Example& e : set) {
      targets.push_back(e.count);
      if (loaded.model->head() == HeadKind::kOrdinal && e.count > loaded.model->rank() - 1)
        ++saturated;
    }
  } else {
    const BandEnergyConfig ec = envelope_config(cfg);
    const EnvelopeCalibration cal = load_calibration(p.calibration, BandEnergyEnvelope(ec));
    for (const Utterance& u : manifest.utterances) {
      estimates.push_back(std::max(0.0, apply_calibration(pick_peaks(envelope_for(u, ec), cal.theta), cal)));
      targets.push_back(u.syllable_count);
    }
  }
  std::ostringstream rows;
  rows.precision(17);
  rows << "id,count,estimate\n";
  for (std::size_t i = 0; i < targets.size(); ++i)
    rows << manifest.utterances[i].id << ',' << targets[i] << ',' << estimates[i] << '\n';
  write_text(out / "predictions.csv", rows.str());
  const double error = relative_error_pct(estimates, targets);
  write_json(out / "metrics.json",
             {{"relative_error_pct", error}, {"utterances", targets.size()}, {"saturated", saturated}});
  std::cout << "relative error " << error << "% over " << targets.size() << " utterances\n";
  return 0;
}

std::pair<std::string, std::string> split_named(const std::string& arg, const char* flag) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size())
    throw UsageError(std::string(flag) + " expects NAME=PATH, got '" + arg + "'");
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

int cmd_experiment(const json& cfg, const Paths& p) {
  if (p.models.empty() && p.envelopes.empty())
    throw UsageError("experiment: give at least one --model or --envelope method");
  const auto start = std::chrono::steady_clock::now();
  const CorpusManifest manifest = load_manifest(p.manifest);
  const fs::path out(p.out);
  write_snapshot(out, cfg);

  SplitOptions so;
  typed([&] {
    so.test_fraction = cfg.at("split").at("test_fraction").get<double>();
    so.sizes_s = cfg.at("split").at("sizes_s").get<std::vector<double>>();
    so.folds = cfg.at("split").at("folds").get<int>();
    return 0;
  });
  so.seed = derive_seed(seed_of(cfg), "split");
  const SplitPlan plan = make_split_plan(manifest, so);
  save_split_plan(plan, out / "split_plan.json");

  std::vector<std::unique_ptr<CountMethod>> methods;
  std::optional<FeatureConfig> features;
  for (const std::string& arg : p.models) {
    const auto [name, path] = split_named(arg, "--model");
    LoadedModel loaded = load_checkpoint(path);
    if (features && loaded.features.to_json() != features->to_json())
      throw UsageError("experiment: all --model checkpoints must share one feature configuration");
    features = loaded.features;
    const TrainConfig tc = train_config(cfg, "adapt", loaded.model->head());
    methods.push_back(std::make_unique<NeuralMethod>(
        name, std::shared_ptr<const CountModel>(std::move(loaded.model)), tc));
  }
  const BandEnergyConfig ec = envelope_config(cfg);
  for (const std::string& arg : p.envelopes) {
    const auto [name, path] = split_named(arg, "--envelope");
    methods.push_back(std::make_unique<EnvelopeMethod>(
        name, load_calibration(path, BandEnergyEnvelope(ec))));
  }

  std::vector<Sample> samples(manifest.utterances.size());
  std::vector<Example> examples;
  if (features) examples = load_examples(manifest, *features, cache_dir_for(p));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Utterance& u = manifest.utterances[i];
    samples[i].id = u.id;
    samples[i].count = u.syllable_count;
    if (features) samples[i].input = std::move(examples[i].input);
    if (!p.envelopes.empty()) samples[i].envelope = envelope_for(u, ec);
  }

  std::vector<const CountMethod*> views;
  for (const auto& m : methods) views.push_back(m.get());
  ExperimentReport report = run_adaptation_experiment(
      views, samples, plan, manifest.name, [](const ExperimentProgress& pr) {
        std::cerr << pr.method << " size " << size_label(pr.size_s) << " fold " << pr.fold << ": ";
        if (pr.cell->ok)
          std::cerr << pr.cell->error_pct << "%\n";
        else
          std::cerr << "FAILED (" << pr.cell->diagnostic << ")\n";
      });
  report.metadata = {{"config", cfg}, {"manifest", fs::path(p.manifest).filename().string()}};
  report.write_json(out / "report.json");
  report.write_csv(out / "report.csv");
  write_json(out / "timing.json", {{"seconds", seconds_since(start)}});
  for (const ExperimentSummary& s : report.summaries())
    std::cout << s.method << '\t' << (s.size_s > 0 ? size_label(s.size_s) : "0") << '\t'
              << s.mean_pct << '\t' << s.std_pct << '\n';
  return 0;
}

int cmd_plot(const json& cfg, const Paths& p) {
  if (p.report.empty() && p.traces.empty())
    throw UsageError("plot: give --report and/or --trace inputs");
  const fs::path out(p.out);
  // Render everything before writing so a bad input leaves no partial images.
  std::vector<std::pair<fs::path, std::string>> files;
  if (!p.report.empty()) {
    const ExperimentReport report = ExperimentReport::read_json(p.report);
    const std::string stem = (report.corpus.empty() ? "report" : report.corpus) + "_adaptation";
    files.push_back({out / (stem + ".svg"), render_report_svg(report)});
    files.push_back({out / (stem + ".csv"), report_table_csv(report)});
  }
  for (const std::string& t : p.traces) {
    std::ifstream in(t);
    if (!in) throw DataError("cannot open trace '" + t + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const AccumulationTrace trace = parse_trace_csv(buf.str(), t);
    std::string stem = fs::path(t).filename().string();
    if (const auto pos = stem.find(".trace.csv"); pos != std::string::npos) stem = stem.substr(0, pos);
    files.push_back({out / (stem + ".svg"), render_trace_svg(trace)});
    files.push_back({out / (stem + ".csv"), trace_csv(trace)});
  }
  write_snapshot(out, cfg);
  for (const auto& [path, text] : files) write_text(path, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Syllable counting from speech audio"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  ConfigOptions opts;
  Paths p;
  bool print_defaults = false;
  app.add_flag("--print-default-config", print_defaults, "print the default configuration and exit");
  app.require_subcommand(0, 1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic burst corpus");
  synth->add_option("--out", p.out, "output directory")->required();

  auto* extract = app.add_subcommand("extract", "compute and cache features for a manifest");
  extract->add_option("--manifest", p.manifest, "corpus manifest (JSONL)")->required()->check(CLI::ExistingFile);
  extract->add_option("--out", p.out, "feature directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train a count model");
  train_cmd->add_option("--manifest", p.manifest, "training manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--val-manifest", p.val_manifest, "validation manifest (default: held-out share of the training manifest)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", p.out, "output directory")->required();

  auto* adapt_cmd = app.add_subcommand("adapt", "retrain the tunable part of a model on new data");
  adapt_cmd->add_option("--checkpoint", p.checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  adapt_cmd->add_option("--manifest", p.manifest, "adaptation manifest")->required()->check(CLI::ExistingFile);
  adapt_cmd->add_option("--out", p.out, "output directory")->required();

  auto* count = app.add_subcommand("count", "print syllable counts for audio files");
  count->add_option("--checkpoint", p.checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  count->add_option("inputs", p.inputs, "WAV files or directories");
  count->add_option("--manifest", p.manifest, "also count every utterance of this manifest")
      ->check(CLI::ExistingFile);
  count->add_option("--trace-dir", p.trace_dir, "write per-frame accumulation traces here");

  auto* calibrate_cmd = app.add_subcommand("calibrate", "fit the envelope baseline");
  calibrate_cmd->add_option("--manifest", p.manifest, "calibration manifest")->required()->check(CLI::ExistingFile);
  calibrate_cmd->add_option("--out", p.out, "output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "relative error of a model or calibration on a manifest");
  evaluate->add_option("--manifest", p.manifest, "test manifest")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--checkpoint", p.checkpoint, "trained checkpoint")->check(CLI::ExistingFile);
  evaluate->add_option("--calibration", p.calibration, "envelope calibration")->check(CLI::ExistingFile);
  evaluate->add_option("--out", p.out, "output directory")->required();

  auto* experiment = app.add_subcommand("experiment", "adaptation-curve experiment");
  experiment->add_option("--manifest", p.manifest, "target-domain manifest")->required()->check(CLI::ExistingFile);
  experiment->add_option("--model", p.models, "NAME=CHECKPOINT neural method (repeatable)");
  experiment->add_option("--envelope", p.envelopes, "NAME=CALIBRATION envelope method (repeatable)");
  experiment->add_option("--out", p.out, "output directory")->required();

  auto* plot = app.add_subcommand("plot", "render SVG figures and their data tables");
  plot->add_option("--report", p.report, "experiment report.json")->check(CLI::ExistingFile);
  plot->add_option("--trace", p.traces, "accumulation trace CSV (repeatable)")->check(CLI::ExistingFile);
  plot->add_option("--out", p.out, "output directory")->required();

  for (CLI::App* cmd : {train_cmd, adapt_cmd, evaluate, experiment})
    cmd->add_option("--cache-dir", p.cache_dir, "feature cache directory (default: <manifest dir>/feature_cache)");
  for (CLI::App* cmd : {synth, extract, train_cmd, adapt_cmd, count, calibrate_cmd, evaluate, experiment, plot})
    add_config_options(cmd, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (print_defaults) {
      std::cout << default_config().dump(2) << '\n';
      return 0;
    }
    if (app.get_subcommands().empty()) throw UsageError("a subcommand is required (see --help)");
    const json cfg = resolve_config(opts);
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (name == "synth") return cmd_synth(cfg, p);
    if (name == "extract") return cmd_extract(cfg, p);
    if (name == "train") return cmd_train(cfg, p);
    if (name == "adapt") return cmd_adapt(cfg, p);
    if (name == "count") return cmd_count(cfg, p);
    if (name == "calibrate") return cmd_calibrate(cfg, p);
    if (name == "evaluate") return cmd_evaluate(cfg, p);
    if (name == "experiment") return cmd_experiment(cfg, p);
    if (name == "plot") return cmd_plot(cfg, p);
    throw UsageError("unknown subcommand '" + name + "'");
  } catch (const Error& e) {
    std::cerr << "sylcount: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "sylcount: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    std::cerr << "sylcount: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
}
