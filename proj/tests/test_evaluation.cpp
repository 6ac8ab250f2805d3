#include "doctest.h"

#include <cmath>
#include <fstream>
#include <numeric>

#include "oracles.hpp"
#include "sylcount/error.hpp"
#include "sylcount/evaluation.hpp"
#include "sylcount/logging.hpp"
#include "sylcount/random.hpp"
#include "sylcount/sylnet.hpp"
#include "test_support.hpp"

using namespace sylcount;

namespace {

// Predicts count + bias; adapting subtracts bias * size_s / (size_s + 10).
// Adaptation fails for `fail_size` and for adaptation sets containing "boom".
class StubMethod final : public CountMethod {
 public:
  StubMethod(std::string name, double bias, double fail_size = -1.0)
      : name_(std::move(name)), bias_(bias), fail_size_(fail_size) {}
  std::string name() const override { return name_; }
  std::vector<double> predict(std::span<const Sample> samples) const override {
    std::vector<double> out;
    for (const Sample& s : samples) out.push_back(s.count + bias_);
    return out;
  }
  std::unique_ptr<CountMethod> adapted(std::span<const Sample> set, std::uint64_t seed) const override {
    seeds.push_back(seed);
    const double size = double(set.size());
    if (size == fail_size_) throw NumericError("stub diverged");
    return std::make_unique<StubMethod>(name_, bias_ - bias_ * size / (size + 10.0));
  }
  mutable std::vector<std::uint64_t> seeds;

 private:
  std::string name_;
  double bias_;
  double fail_size_;
};

std::vector<Sample> make_samples(int n) {
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.id = "u" + std::to_string(i);
    s.count = 1 + i % 5;
    out.push_back(s);
  }
  return out;
}

// Test ids u0..u9; "size" k means the first k non-test utterances.
SplitPlan make_plan(const std::vector<double>& sizes, int folds) {
  SplitPlan plan;
  plan.seed = 42;
  plan.sizes_s = sizes;
  plan.folds = folds;
  for (int i = 0; i < 10; ++i) plan.test_ids.push_back("u" + std::to_string(i));
  for (double size : sizes)
    for (int f = 0; f < folds; ++f) {
      std::vector<std::string> ids;
      for (int i = 0; i < int(size); ++i) ids.push_back("u" + std::to_string(10 + (i + f) % 20));
      plan.adaptation_sets[{size, f}] = ids;
    }
  return plan;
}

}  // namespace

TEST_CASE("relative_error_pct: worked examples, clamping and the oracle") {
  CHECK(relative_error_pct(std::vector<double>{3, 5}, std::vector<int>{3, 5}) == 0.0);
  CHECK(relative_error_pct(std::vector<double>{2}, std::vector<int>{4}) == doctest::Approx(50.0));
  CHECK(relative_error_pct(std::vector<double>{-3}, std::vector<int>{2}) == doctest::Approx(100.0));
  CHECK_THROWS_AS(relative_error_pct(std::vector<double>{1}, std::vector<int>{0}), DataError);
  CHECK_THROWS_AS(relative_error_pct(std::vector<double>{}, std::vector<int>{}), UsageError);
  CHECK_THROWS_AS(relative_error_pct(std::vector<double>{1, 2}, std::vector<int>{1}), UsageError);

  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(rng.between(1, 30));
    std::vector<int> s(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.uniform(0.0, 20.0), s[i] = rng.between(1, 20);
    const double value = relative_error_pct(p, s);
    CHECK(value == doctest::Approx(100.0 * oracle::l1_relative(p, s)).epsilon(1e-12));
    // Invariant under a joint permutation.
    std::vector<std::size_t> perm(p.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<double> pp;
    std::vector<int> ss;
    for (std::size_t i : perm) pp.push_back(p[i]), ss.push_back(s[i]);
    CHECK(relative_error_pct(pp, ss) == doctest::Approx(value).epsilon(1e-12));
  }
}

TEST_CASE("run_adaptation_experiment: cell bookkeeping with stub methods") {
  const auto samples = make_samples(30);
  const SplitPlan plan = make_plan({2, 5, 8}, 3);
  StubMethod a("a", 2.0), b("b", 1.0, 5.0);
  const std::vector<const CountMethod*> methods{&a, &b};
  int callbacks = 0;
  const ExperimentReport r = run_adaptation_experiment(methods, samples, plan, "stub",
                                                       [&](const ExperimentProgress& p) {
                                                         ++callbacks;
                                                         CHECK(p.cell != nullptr);
                                                       });
  CHECK(r.corpus == "stub");
  CHECK(r.methods == std::vector<std::string>{"a", "b"});
  CHECK(r.cells.size() == 2 * (1 + 3) * 3);
  CHECK(callbacks == int(r.cells.size()));
  CHECK(a.seeds.size() == 9);

  // The unadapted error is the same for every fold.
  double a_unadapted = -1;
  for (const auto& c : r.cells)
    if (c.method == "a" && c.size_s == 0.0) {
      if (a_unadapted < 0) a_unadapted = c.error_pct;
      CHECK(c.error_pct == a_unadapted);
    }
  std::vector<int> counts;
  for (int i = 0; i < 10; ++i) counts.push_back(samples[i].count);
  std::vector<double> preds;
  for (int c : counts) preds.push_back(c + 2.0);
  CHECK(a_unadapted == doctest::Approx(relative_error_pct(preds, counts)));

  int failed = 0;
  for (const auto& c : r.cells)
    if (!c.ok) {
      ++failed;
      CHECK(c.method == "b");
      CHECK(c.size_s == 5.0);
      CHECK(c.diagnostic.find("diverged") != std::string::npos);
    }
  CHECK(failed == 3);

  // Summaries: sample standard deviation over successful folds.
  for (const ExperimentSummary& s : r.summaries()) {
    CAPTURE(s.method);
    CAPTURE(s.size_s);
    std::vector<double> values;
    for (const auto& c : r.cells)
      if (c.method == s.method && c.size_s == s.size_s && c.ok) values.push_back(c.error_pct);
    CHECK(s.folds_ok == int(values.size()));
    if (values.empty()) {
      CHECK(std::isnan(s.mean_pct));
      CHECK(s.folds_failed == 3);
      continue;
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    CHECK(std::abs(s.mean_pct - mean) < 1e-12);
    CHECK(std::abs(s.std_pct - std::sqrt(ss / (values.size() - 1))) < 1e-12);
  }
  // Larger adaptation sets shrink the stub's bias.
  const auto summaries = r.summaries();
  CHECK(summaries[3].size_s == 8.0);
  CHECK(summaries[3].mean_pct < summaries[0].mean_pct);

  // Seeds depend on method, size and fold only.
  StubMethod again("a", 2.0);
  const std::vector<const CountMethod*> single{&again};
  run_adaptation_experiment(single, samples, plan, "stub");
  CHECK(again.seeds == a.seeds);
}

TEST_CASE("run_adaptation_experiment: plan problems become failed cells or errors") {
  const auto samples = make_samples(30);
  SplitPlan plan = make_plan({2}, 2);
  plan.adaptation_sets.erase({2.0, 1});
  StubMethod a("a", 1.0);
  const std::vector<const CountMethod*> methods{&a};
  const ExperimentReport r = run_adaptation_experiment(methods, samples, plan, "x");
  CHECK_FALSE(r.cells.back().ok);
  CHECK(r.cells.back().diagnostic.find("no adaptation set") != std::string::npos);

  plan.test_ids.push_back("ghost");
  CHECK_THROWS_AS(run_adaptation_experiment(methods, samples, plan, "x"), DataError);
  const std::vector<const CountMethod*> twice{&a, &a};
  CHECK_THROWS_AS(run_adaptation_experiment(twice, samples, make_plan({2}, 1), "x"), UsageError);
}

TEST_CASE("ExperimentReport: JSON round trip and malformed cells") {
  const auto dir = testing::scratch_dir("report");
  StubMethod a("a", 2.0), b("b", 1.0, 5.0);
  const std::vector<const CountMethod*> methods{&a, &b};
  ExperimentReport r = run_adaptation_experiment(methods, make_samples(30), make_plan({2, 5}, 2), "stub");
  r.metadata["note"] = "x";
  r.write_json(dir / "report.json");
  const ExperimentReport back = ExperimentReport::read_json(dir / "report.json");
  CHECK(back.to_json() == r.to_json());
  REQUIRE(back.cells.size() == r.cells.size());
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    CHECK(back.cells[i].ok == r.cells[i].ok);
    CHECK(back.cells[i].error_pct == r.cells[i].error_pct);
  }

  nlohmann::json j = r.to_json();
  j["cells"][3]["error_pct"] = -4.0;
  try {
    ExperimentReport::from_json(j);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("cell 3") != std::string::npos);
  }
  j = r.to_json();
  j.erase("methods");
  CHECK_THROWS_AS(ExperimentReport::from_json(j), DataError);
  std::ofstream(dir / "bad.json") << "not json";
  CHECK_THROWS_AS(ExperimentReport::read_json(dir / "bad.json"), DataError);

  r.write_csv(dir / "report.csv");
  std::ifstream in(dir / "report.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == r.cells.size() + 1);
}

TEST_CASE("EnvelopeMethod: predictions clamp at zero and adaptation never hurts on its own data") {
  Rng rng(3);
  std::vector<Sample> samples;
  for (int i = 0; i < 20; ++i) {
    Sample s;
    s.id = "e" + std::to_string(i);
    s.count = rng.between(1, 6);
    std::vector<double> v{0.0};
    for (int k = 0; k < s.count; ++k) v.insert(v.end(), {rng.uniform(0.5, 1.0), rng.uniform(0.0, 0.3)});
    s.envelope = Envelope{v, 10.0, s.id};
    samples.push_back(s);
  }
  std::vector<int> counts;
  for (const auto& s : samples) counts.push_back(s.count);
  const EnvelopeMethod start("env", {0.9, -1.0, 0.0});
  for (double p : start.predict(samples)) CHECK(p >= 0.0);
  const double before = relative_error_pct(start.predict(samples), counts);
  const auto adapted = start.adapted(samples, 0);
  const double after = relative_error_pct(adapted->predict(samples), counts);
  CHECK(after <= before);
  CHECK(after == doctest::Approx(0.0));
  const auto again = adapted->adapted(samples, 1);
  CHECK(static_cast<const EnvelopeMethod&>(*again).calibration() ==
        static_cast<const EnvelopeMethod&>(*adapted).calibration());
}

TEST_CASE("NeuralMethod and trace_accumulation agree with predict_count") {
  SylNetConfig c;
  c.input_dim = 3;
  c.n_layers = 2;
  c.n_channels = 4;
  c.kernel_len = 3;
  c.accumulator_width = 4;
  for (HeadKind head : {HeadKind::kScalar, HeadKind::kOrdinal}) {
    c.head = head;
    c.rank = head == HeadKind::kOrdinal ? 6 : 0;
    auto model = std::make_shared<SylNet>(c, 2);
    TrainConfig tc;
    tc.loss = head == HeadKind::kOrdinal ? LossKind::kOrdinal : LossKind::kL1Relative;
    tc.max_epochs = 2;
    tc.batch_size = 2;
    const NeuralMethod method("n", model, tc);
    CHECK(method.max_count() == (head == HeadKind::kOrdinal ? std::optional<int>(5) : std::nullopt));
    std::vector<Sample> samples;
    for (int i = 0; i < 6; ++i) {
      Sample s;
      s.id = "n" + std::to_string(i);
      s.count = 1 + i % 3;
      s.input = testing::random_matrix(12 + i, 3, 100 + i);
      samples.push_back(s);
    }
    const std::vector<double> preds = method.predict(samples);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const std::vector<double> trace = trace_accumulation(*model, samples[i].input);
      CHECK(trace.size() == std::size_t(samples[i].input.rows()));
      CHECK(trace.back() == preds[i]);
      for (double v : trace) CHECK(v >= 0.0);
    }
    const WarningSink previous = set_warning_sink([](const std::string&) {});
    const ParamSet before = model->params();
    const auto adapted = method.adapted(samples, 7);
    set_warning_sink(previous);
    CHECK(model->params() == before);  // the source model is untouched
    const auto& tuned = static_cast<const NeuralMethod&>(*adapted).model();
    for (const auto& name : tuned.partition().frozen) CHECK(tuned.params().at(name) == before.at(name));
  }
}
