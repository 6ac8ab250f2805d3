#include "sylcount/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "sylcount/error.hpp"
#include "sylcount/logging.hpp"
#include "sylcount/random.hpp"
#include "sylcount/wav.hpp"

namespace sylcount {

using nlohmann::json;

const Utterance& CorpusManifest::at(const std::string& id) const {
  for (const auto& u : utterances)
    if (u.id == id) return u;
  throw DataError("utterance '" + id + "' not in manifest '" + name + "'");
}

std::set<std::string> CorpusManifest::speakers() const {
  std::set<std::string> out;
  for (const auto& u : utterances) out.insert(u.speaker_id);
  return out;
}

double CorpusManifest::total_duration_s() const {
  double total = 0.0;
  for (const auto& u : utterances) total += u.duration_s;
  return total;
}

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  return out;
}

}  // namespace

void validate_manifest(const CorpusManifest& manifest) {
  std::set<std::string> seen;
  std::vector<std::string> duplicates, bad_counts, bad_speakers, bad_durations;
  for (const auto& u : manifest.utterances) {
    if (!seen.insert(u.id).second) duplicates.push_back(u.id);
    if (u.syllable_count < 1) bad_counts.push_back(u.id);
    if (u.speaker_id.empty()) bad_speakers.push_back(u.id);
    if (!(u.duration_s > 0.0)) bad_durations.push_back(u.id);
  }
  if (!duplicates.empty()) throw DataError("duplicate utterance id(s): " + join_ids(duplicates));
  if (!bad_counts.empty())
    throw DataError("syllable_count must be >= 1; rejected id(s): " + join_ids(bad_counts));
  if (!bad_speakers.empty())
    throw DataError("empty speaker_id for id(s): " + join_ids(bad_speakers));
  if (!bad_durations.empty())
    throw DataError("non-positive duration for id(s): " + join_ids(bad_durations));
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  const std::filesystem::path base = path.parent_path();

  CorpusManifest manifest;
  manifest.name = path.stem().string();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("malformed record at " + where + ": " + e.what());
    }
    if (!rec.is_object()) throw DataError("record at " + where + " is not an object");
    const std::string label =
        rec.contains("id") && rec["id"].is_string() ? "'" + rec["id"].get<std::string>() + "'" : where;
    for (const char* field : {"id", "audio_path", "syllable_count", "speaker_id"}) {
      if (!rec.contains(field))
        throw DataError("record " + label + " (" + where + ") is missing field '" + field + "'");
    }
    Utterance u;
    try {
      u.id = rec["id"].get<std::string>();
      u.audio_path = rec["audio_path"].get<std::string>();
      u.speaker_id = rec["speaker_id"].get<std::string>();
      const json& c = rec["syllable_count"];
      if (!c.is_number_integer())
        throw DataError("record " + label + ": syllable_count must be an integer");
      u.syllable_count = c.get<int>();
    } catch (const json::exception& e) {
      throw DataError("record " + label + " (" + where + ") has a field of the wrong type: " +
                      e.what());
    }
    if (u.audio_path.is_relative()) u.audio_path = base / u.audio_path;
    manifest.utterances.push_back(std::move(u));
  }
  // Reject bad counts before touching audio so the error lists every offender.
  std::vector<std::string> bad_counts;
  for (const auto& u : manifest.utterances)
    if (u.syllable_count < 1) bad_counts.push_back(u.id);
  if (!bad_counts.empty())
    throw DataError("syllable_count must be >= 1; rejected id(s): " + join_ids(bad_counts));

  for (auto& u : manifest.utterances) {
    const WavInfo info = read_wav_info(u.audio_path);
    u.duration_s = info.duration_s();
  }
  validate_manifest(manifest);
  return manifest;
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  const std::filesystem::path base = path.parent_path();
  for (const auto& u : manifest.utterances) {
    std::filesystem::path audio = u.audio_path;
    if (audio.is_absolute() && !base.empty()) {
      auto rel = audio.lexically_relative(std::filesystem::absolute(base));
      if (!rel.empty() && rel.native()[0] != '.') audio = rel;
    } else if (!base.empty()) {
      auto rel = audio.lexically_relative(base);
      if (!rel.empty()) audio = rel;
    }
    json rec = {{"id", u.id},
                {"audio_path", audio.generic_string()},
                {"syllable_count", u.syllable_count},
                {"speaker_id", u.speaker_id}};
    out << rec.dump() << '\n';
  }
}

std::string size_label(double size_s) {
  std::ostringstream os;
  os.precision(6);
  os << size_s << "s";
  return os.str();
}

std::vector<double> geometric_sizes(double min_s, double max_s, int count) {
  if (count < 1 || !(min_s > 0.0) || max_s < min_s)
    throw UsageError("invalid adaptation size range");
  std::vector<double> sizes;
  if (count == 1) return {min_s};
  for (int i = 0; i < count; ++i) {
    const double v = min_s * std::pow(max_s / min_s, double(i) / (count - 1));
    // Round to 0.1 s so labels stay readable and plans serialize exactly.
    sizes.push_back(std::round(v * 10.0) / 10.0);
  }
  return sizes;
}

namespace {

// One attempt at drawing a set whose duration lands in the tolerance band.
std::vector<std::string> sample_adaptation_set(const std::vector<const Utterance*>& pool,
                                               double nominal, Rng& rng, bool& ok) {
  std::vector<const Utterance*> order = pool;
  rng.shuffle(order);
  const double lo = nominal * (1.0 - kSizeTolerance);
  const double hi = nominal * (1.0 + kSizeTolerance);
  double total = 0.0;
  std::vector<std::string> ids;
  for (const Utterance* u : order) {
    if (total >= nominal) break;
    if (total + u->duration_s > hi) continue;
    total += u->duration_s;
    ids.push_back(u->id);
  }
  ok = total >= lo && total <= hi;
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

SplitPlan make_split_plan(const CorpusManifest& manifest, const SplitOptions& options) {
  if (!(options.test_fraction > 0.0 && options.test_fraction < 1.0))
    throw UsageError("test_fraction must lie in (0, 1)");
  if (options.folds < 1) throw UsageError("folds must be >= 1");
  if (options.sizes_s.empty()) throw UsageError("at least one adaptation size is required");
  for (double s : options.sizes_s)
    if (!(s > 0.0)) throw UsageError("adaptation sizes must be positive");

  std::map<std::string, std::vector<const Utterance*>> by_speaker;
  for (const auto& u : manifest.utterances) by_speaker[u.speaker_id].push_back(&u);
  if (by_speaker.size() < 2)
    throw DataError("corpus '" + manifest.name +
                    "' has fewer than 2 speakers; a speaker-disjoint split is impossible");

  std::vector<std::string> speakers;
  for (const auto& [spk, _] : by_speaker) speakers.push_back(spk);
  Rng speaker_rng(derive_seed(options.seed, "split/speakers"));
  speaker_rng.shuffle(speakers);

  const double target = options.test_fraction * double(manifest.utterances.size());
  std::size_t test_count = 0;
  std::size_t n_test_speakers = 0;
  while (n_test_speakers + 1 < speakers.size() && double(test_count) < target) {
    test_count += by_speaker[speakers[n_test_speakers]].size();
    ++n_test_speakers;
  }

  SplitPlan plan;
  plan.seed = options.seed;
  plan.test_fraction = options.test_fraction;
  plan.sizes_s = options.sizes_s;
  plan.folds = options.folds;
  std::vector<const Utterance*> pool;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    for (const Utterance* u : by_speaker[speakers[i]]) {
      if (i < n_test_speakers)
        plan.test_ids.push_back(u->id);
      else
        pool.push_back(u);
    }
  }
  std::sort(plan.test_ids.begin(), plan.test_ids.end());
  std::sort(pool.begin(), pool.end(),
            [](const Utterance* a, const Utterance* b) { return a->id < b->id; });

  double pool_total = 0.0;
  for (const Utterance* u : pool) pool_total += u->duration_s;
  const double largest = *std::max_element(options.sizes_s.begin(), options.sizes_s.end());
  if (pool_total < largest * (1.0 - kSizeTolerance)) {
    std::ostringstream os;
    os << "insufficient non-test data for adaptation size " << largest << " s (needs at least "
       << largest * (1.0 - kSizeTolerance) << " s); achievable maximum is " << pool_total << " s";
    throw DataError(os.str());
  }

  constexpr int kMaxAttempts = 500;
  for (std::size_t si = 0; si < options.sizes_s.size(); ++si) {
    const double size = options.sizes_s[si];
    for (int fold = 0; fold < options.folds; ++fold) {
      const std::uint64_t base = derive_seed(options.seed, "split/adaptation",
                                             static_cast<std::uint64_t>(si * 1000 + fold));
      bool ok = false;
      std::vector<std::string> ids;
      for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
        Rng rng(derive_seed(base, "attempt", static_cast<std::uint64_t>(attempt)));
        ids = sample_adaptation_set(pool, size, rng, ok);
      }
      if (!ok) {
        std::ostringstream os;
        os << "could not draw an adaptation set of " << size << " s (+/-"
           << kSizeTolerance * 100 << "%) for fold " << fold
           << " from the non-test pool; utterance durations are too coarse";
        throw DataError(os.str());
      }
      plan.adaptation_sets[{size, fold}] = std::move(ids);
    }
  }
  return plan;
}

ValidationSplit split_validation(const CorpusManifest& manifest, double fraction,
                                 std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw UsageError("validation fraction must lie in (0, 1)");
  const std::size_t n = manifest.utterances.size();
  if (n < 2) throw DataError("corpus '" + manifest.name + "' is too small for a validation split");
  const double target = std::max(1.0, std::round(fraction * double(n)));

  std::map<std::string, std::vector<std::string>> by_speaker;
  for (const auto& u : manifest.utterances) by_speaker[u.speaker_id].push_back(u.id);
  std::vector<std::string> speakers;
  for (const auto& [spk, _] : by_speaker) speakers.push_back(spk);
  Rng rng(derive_seed(seed, "split/validation"));
  rng.shuffle(speakers);

  ValidationSplit split;
  std::set<std::string> held;
  double taken = 0.0;
  for (std::size_t i = 0; i < speakers.size() && held.size() + 1 < speakers.size(); ++i) {
    const double size = double(by_speaker[speakers[i]].size());
    if (taken + size <= 1.5 * target) {
      held.insert(speakers[i]);
      taken += size;
    }
  }
  if (!held.empty() && taken >= 0.5 * target) {
    split.speaker_disjoint = true;
    for (const auto& u : manifest.utterances)
      (held.count(u.speaker_id) ? split.validation_ids : split.train_ids).push_back(u.id);
  } else {
    warn("corpus '" + manifest.name +
         "': no speaker subset matches the validation fraction; holding out utterances instead");
    std::vector<std::string> ids;
    for (const auto& u : manifest.utterances) ids.push_back(u.id);
    std::sort(ids.begin(), ids.end());
    rng.shuffle(ids);
    const auto k = static_cast<std::ptrdiff_t>(target);
    split.validation_ids.assign(ids.begin(), ids.begin() + k);
    split.train_ids.assign(ids.begin() + k, ids.end());
  }
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.validation_ids.begin(), split.validation_ids.end());
  return split;
}

namespace {

json plan_to_json(const SplitPlan& plan) {
  json sets = json::array();
  for (const auto& [key, ids] : plan.adaptation_sets) {
    sets.push_back({{"size_s", key.size_s},
                    {"size_label", size_label(key.size_s)},
                    {"fold", key.fold},
                    {"ids", ids}});
  }
  return json{{"seed", plan.seed},
              {"test_fraction", plan.test_fraction},
              {"sizes_s", plan.sizes_s},
              {"folds", plan.folds},
              {"test_ids", plan.test_ids},
              {"adaptation_sets", sets}};
}

}  // namespace

std::string split_plan_to_string(const SplitPlan& plan) { return plan_to_json(plan).dump(1) + "\n"; }

void save_split_plan(const SplitPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split plan '" + path.string() + "'");
  out << split_plan_to_string(plan);
}

SplitPlan load_split_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split plan '" + path.string() + "'");
  try {
    const json j = json::parse(in);
    SplitPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.test_fraction = j.at("test_fraction").get<double>();
    plan.sizes_s = j.at("sizes_s").get<std::vector<double>>();
    plan.folds = j.at("folds").get<int>();
    plan.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    for (const auto& s : j.at("adaptation_sets")) {
      plan.adaptation_sets[{s.at("size_s").get<double>(), s.at("fold").get<int>()}] =
          s.at("ids").get<std::vector<std::string>>();
    }
    return plan;
  } catch (const json::exception& e) {
    throw DataError("malformed split plan '" + path.string() + "': " + e.what());
  }
}

}  // namespace sylcount
