#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace sylcount {

struct Utterance {
  std::string id;
  std::filesystem::path audio_path;
  int syllable_count = 0;
  std::string speaker_id;
  double duration_s = 0.0;
};

struct CorpusManifest {
  std::string name;
  std::vector<Utterance> utterances;

  const Utterance& at(const std::string& id) const;
  std::set<std::string> speakers() const;
  double total_duration_s() const;
};

// Reads a line-delimited JSON manifest. Every record must carry `id`,
// `audio_path`, `syllable_count` and `speaker_id`; relative audio paths are
// resolved against the manifest's directory. Audio headers are read to obtain
// durations. The manifest name defaults to the file stem.
CorpusManifest load_manifest(const std::filesystem::path& path);

// Validates manifest invariants (unique ids, non-empty speakers, counts >= 1,
// positive durations). Throws DataError listing every offending id.
void validate_manifest(const CorpusManifest& manifest);

// Writes a manifest in the format load_manifest reads. Audio paths are written
// relative to the manifest directory when possible.
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

struct AdaptationKey {
  double size_s = 0.0;
  int fold = 0;
  auto operator<=>(const AdaptationKey&) const = default;
};

std::string size_label(double size_s);

struct SplitPlan {
  std::uint64_t seed = 0;
  double test_fraction = 0.5;
  std::vector<double> sizes_s;
  int folds = 0;
  std::vector<std::string> test_ids;
  std::map<AdaptationKey, std::vector<std::string>> adaptation_sets;

  bool operator==(const SplitPlan&) const = default;
};

// Relative tolerance on the total duration of every adaptation set.
inline constexpr double kSizeTolerance = 0.10;

// Geometrically spaced adaptation sizes; the default is 8 sizes spanning
// 30 s to 45 min.
std::vector<double> geometric_sizes(double min_s = 30.0, double max_s = 2700.0, int count = 8);

struct SplitOptions {
  double test_fraction = 0.5;
  std::vector<double> sizes_s = geometric_sizes();
  int folds = 5;
  std::uint64_t seed = 0;
};

// Speaker-disjoint test/adaptation split. Speakers are first assigned to the
// test side until it holds about `test_fraction` of the utterances; each
// (size, fold) adaptation set is then sampled independently from the
// remaining speakers' utterances so that its total duration lies within
// kSizeTolerance of the nominal size.
SplitPlan make_split_plan(const CorpusManifest& manifest, const SplitOptions& options);

struct ValidationSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
  bool speaker_disjoint = false;
};

// Holds out about `fraction` of the utterances for early stopping. Whole
// speakers are held out when some combination of speakers lands within half
// a target of the goal without taking every speaker; otherwise utterances are
// sampled individually (with a warning). Ids come back sorted.
ValidationSplit split_validation(const CorpusManifest& manifest, double fraction,
                                 std::uint64_t seed);

void save_split_plan(const SplitPlan& plan, const std::filesystem::path& path);
SplitPlan load_split_plan(const std::filesystem::path& path);
std::string split_plan_to_string(const SplitPlan& plan);

}  // namespace sylcount
