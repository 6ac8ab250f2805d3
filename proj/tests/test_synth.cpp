#include "doctest.h"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "sylcount/corpus.hpp"
#include "sylcount/error.hpp"
#include "sylcount/random.hpp"
#include "sylcount/synth.hpp"
#include "test_support.hpp"

using namespace sylcount;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("synthesize_utterance: one onset per syllable, in order and inside the signal") {
  SynthConfig c;
  Rng rng(5);
  for (int count = 1; count <= 12; ++count) {
    const SpeakerProfile spk = make_speaker(c, count % c.n_speakers);
    std::vector<std::size_t> onsets;
    const Waveform w = synthesize_utterance(count, spk, c, rng, &onsets);
    REQUIRE(onsets.size() == std::size_t(count));
    CHECK(std::is_sorted(onsets.begin(), onsets.end()));
    CHECK(onsets.back() < w.samples.size());
    CHECK(w.sample_rate == c.sample_rate);
    for (double x : w.samples) CHECK(std::abs(x) <= 1.0);
  }
}

TEST_CASE("synthesize_corpus: byte-identical output for a seed") {
  SynthConfig c;
  c.n_utterances = 6;
  c.seed = 3;
  const auto a = testing::scratch_dir("synth_a"), b = testing::scratch_dir("synth_b");
  const CorpusManifest ma = synthesize_corpus(c, a);
  synthesize_corpus(c, b);
  CHECK(slurp(a / "manifest.jsonl") == slurp(b / "manifest.jsonl"));
  for (const auto& u : ma.utterances)
    CHECK(slurp(u.audio_path) == slurp(b / "audio" / u.audio_path.filename()));
  const CorpusManifest reloaded = load_manifest(a / "manifest.jsonl");
  REQUIRE(reloaded.utterances.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(reloaded.utterances[i].syllable_count == ma.utterances[i].syllable_count);
    CHECK(reloaded.utterances[i].duration_s == doctest::Approx(ma.utterances[i].duration_s).epsilon(1e-9));
  }
  c.seed = 4;
  const auto d = testing::scratch_dir("synth_d");
  synthesize_corpus(c, d);
  CHECK(slurp(a / "manifest.jsonl") != slurp(d / "manifest.jsonl"));
}

TEST_CASE("synthesize_corpus: counts are uniform over the configured range") {
  SynthConfig c;
  c.n_utterances = 400;
  c.min_count = 1;
  c.max_count = 8;
  c.seed = 12;
  c.burst_min_ms = 20;
  c.burst_max_ms = 30;
  c.gap_min_ms = 10;
  c.gap_max_ms = 20;
  c.edge_silence_ms = 10;
  const CorpusManifest m = synthesize_corpus(c, testing::scratch_dir("synth_hist"));
  std::map<int, int> hist;
  for (const auto& u : m.utterances) ++hist[u.syllable_count];
  CHECK(hist.begin()->first >= 1);
  CHECK(hist.rbegin()->first <= 8);
  const double expected = 400.0 / 8.0;
  double chi2 = 0.0;
  for (int k = 1; k <= 8; ++k) chi2 += (hist[k] - expected) * (hist[k] - expected) / expected;
  CHECK(chi2 < 24.3);  // 7 degrees of freedom, p = 0.001
  CHECK(m.speakers().size() == 4);
}

TEST_CASE("SynthConfig: validation and JSON") {
  SynthConfig c;
  c.min_count = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.max_count = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.snr_db = 12.0;
  c.formant_scale = 1.3;
  const SynthConfig back = SynthConfig::from_json(c.to_json());
  CHECK(back.snr_db == 12.0);
  CHECK(back.formant_scale == 1.3);
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS_AS(SynthConfig::from_json(nlohmann::json{{"n_utterances", "x"}}), DataError);
}
