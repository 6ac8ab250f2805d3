#include "doctest.h"

#include <cmath>
#include <limits>
#include <set>

#include "sylcount/error.hpp"
#include "sylcount/sylnet.hpp"
#include "test_support.hpp"

using namespace sylcount;
using namespace sylcount::testing;

namespace {

SylNetConfig tiny_config(HeadKind head) {
  SylNetConfig c;
  c.input_dim = 24;
  c.n_layers = 2;
  c.n_channels = 4;
  c.kernel_len = 3;
  c.accumulator_width = 4;
  c.head = head;
  c.rank = head == HeadKind::kOrdinal ? 6 : 0;
  return c;
}

}  // namespace

TEST_CASE("sylnet: analytic gradients match central finite differences") {
  for (HeadKind head : {HeadKind::kScalar, HeadKind::kOrdinal}) {
    CAPTURE(to_string(head));
    SylNet model(tiny_config(head), 11);
    // Non-zero biases so every bias path is exercised.
    Rng rng(5);
    for (std::size_t i = 0; i < model.params().size(); ++i)
      if (model.params().name(i).find("bias") != std::string::npos)
        for (Eigen::Index k = 0; k < model.params()[i].size(); ++k)
          model.params()[i].data()[k] = rng.uniform(-0.3, 0.3);
    const Eigen::MatrixXd x = random_matrix(12, 24, 3);
    const int target = 3;
    ParamSet analytic = model.params().zeros_like();
    model.forward_backward(x, {}, head_gradient_for(model, target), analytic);
    const ParamSet numeric = finite_difference_gradient(model, x, target);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      CAPTURE(analytic.name(i));
      CHECK(relative_difference(analytic[i], numeric[i]) <= 1e-4);
    }
  }
}

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Scalar LSTM step with the same gate order (input, forget, cell, output)
// and constant forget offset as the library.
struct TinyLstm {
  double h = 0.0, c = 0.0;
  void step(const double x[2], const double wx[2][4], const double wh[4], const double b[4]) {
    double pre[4];
    for (int g = 0; g < 4; ++g) pre[g] = wx[0][g] * x[0] + wx[1][g] * x[1] + wh[g] * h + b[g];
    const double i = sig(pre[0]), f = sig(pre[1] + nn::kForgetBias), cand = std::tanh(pre[2]),
                 o = sig(pre[3]);
    c = f * c + i * cand;
    h = o * std::tanh(c);
  }
};

}  // namespace

TEST_CASE("sylnet: hand-computed forward pass for N=1, K=2, w=1, A=1") {
  SylNetConfig c;
  c.input_dim = 2;
  c.n_layers = 1;
  c.n_channels = 2;
  c.kernel_len = 1;
  c.accumulator_width = 1;
  SylNet model(c, 0);
  ParamSet& p = model.params();
  p.at("input.filter.weight") << 0.5, -0.3, 0.2, 0.8;
  p.at("input.filter.bias") << 0.1, -0.1;
  p.at("input.gate.weight") << -0.4, 0.6, 0.7, 0.1;
  p.at("input.gate.bias") << 0.05, 0.0;
  p.at("layer.0.filter.weight") << 0.9, 0.2, -0.5, 0.4;
  p.at("layer.0.filter.bias") << 0.0, 0.2;
  p.at("layer.0.gate.weight") << 0.3, -0.2, 0.1, 0.5;
  p.at("layer.0.gate.bias") << -0.1, 0.1;
  p.at("layer.0.residual.weight") << 7.0, 7.0, 7.0, 7.0;  // unused by the last layer
  p.at("layer.0.skip.weight") << 1.2, -0.7, 0.4, 0.9;
  p.at("layer.0.skip.bias") << 0.05, -0.05;
  p.at("postnet.conv.weight") << 0.6, -0.2, -0.8, 0.5;
  p.at("postnet.conv.bias") << 0.3, -0.1;
  const double wx[2][4] = {{0.5, -0.4, 0.9, 0.3}, {-0.2, 0.7, 0.1, -0.5}},
               wh[4] = {0.2, 0.1, -0.6, 0.4}, b[4] = {0.0, 0.1, -0.2, 0.05};
  for (int g = 0; g < 4; ++g) {
    p.at("postnet.lstm.wx")(0, g) = wx[0][g];
    p.at("postnet.lstm.wx")(1, g) = wx[1][g];
    p.at("postnet.lstm.wh")(0, g) = wh[g];
    p.at("postnet.lstm.bias")(0, g) = b[g];
  }
  p.at("head.weight") << 2.5;
  p.at("head.bias") << 0.4;

  Eigen::MatrixXd x(3, 2);
  x << 1.0, 0.0, -0.5, 2.0, 0.3, -1.2;

  const auto gated = [](const double in[2], const Eigen::MatrixXd& fw, const Eigen::MatrixXd& fb,
                        const Eigen::MatrixXd& gw, const Eigen::MatrixXd& gb, double out[2]) {
    for (int k = 0; k < 2; ++k) {
      const double f = in[0] * fw(0, k) + in[1] * fw(1, k) + fb(0, k);
      const double g = in[0] * gw(0, k) + in[1] * gw(1, k) + gb(0, k);
      out[k] = std::tanh(f) * sig(g);
    }
  };
  TinyLstm acc;
  std::vector<double> expected;
  for (int t = 0; t < 3; ++t) {
    const double in[2] = {x(t, 0), x(t, 1)};
    double a[2], z[2], skip[2];
    gated(in, p.at("input.filter.weight"), p.at("input.filter.bias"), p.at("input.gate.weight"),
          p.at("input.gate.bias"), a);
    gated(a, p.at("layer.0.filter.weight"), p.at("layer.0.filter.bias"),
          p.at("layer.0.gate.weight"), p.at("layer.0.gate.bias"), z);
    for (int k = 0; k < 2; ++k)
      skip[k] = z[0] * p.at("layer.0.skip.weight")(0, k) + z[1] * p.at("layer.0.skip.weight")(1, k) +
                p.at("layer.0.skip.bias")(0, k);
    const double conv[2] = {std::max(0.0, skip[0] * 0.6 + skip[1] * -0.8 + 0.3),
                            std::max(0.0, skip[0] * -0.2 + skip[1] * 0.5 - 0.1)};
    acc.step(conv, wx, wh, b);
    expected.push_back(2.5 * acc.h + 0.4);
  }
  const ForwardTrace trace = model.forward(x);
  REQUIRE(trace.per_frame_head.rows() == 3);
  for (int t = 0; t < 3; ++t) CHECK(trace.per_frame_head(t, 0) == doctest::Approx(expected[t]).epsilon(1e-12));
  CHECK(trace.final_estimate(0) == trace.per_frame_head(2, 0));
}

TEST_CASE("sylnet: parameter count has the closed form") {
  for (int n : {1, 3, 10})
    for (int k : {4, 16})
      for (int w : {1, 3, 5})
        for (int a : {2, 8}) {
          SylNetConfig c;
          c.input_dim = 24;
          c.n_layers = n;
          c.n_channels = k;
          c.kernel_len = w;
          c.accumulator_width = a;
          const SylNet model(c, 0);
          const long d = 24;
          const long expected = 2 * (w * d * k + k) + n * (2 * (w * k * k + k) + 2 * (k * k + k)) +
                                (w * k * k + k) + (4 * a * (k + a + 1)) + (a + 1);
          CHECK(model.params().total_elements() == expected);
        }
}

TEST_CASE("sylnet: partition is exhaustive, disjoint and small for the default model") {
  const SylNet model(SylNetConfig{}, 0);
  const ParamPartition part = model.partition();
  std::set<std::string> seen;
  long tunable = 0;
  for (const auto& name : part.frozen) CHECK(seen.insert(name).second);
  for (const auto& name : part.tunable) {
    CHECK(seen.insert(name).second);
    tunable += model.params().at(name).size();
    const bool postnet = name.rfind("postnet.", 0) == 0 || name.rfind("head.", 0) == 0 ||
                         name.find(".skip.") != std::string::npos;
    CHECK_MESSAGE(postnet, name);
  }
  CHECK(seen.size() == model.params().size());
  CHECK(double(tunable) / double(model.params().total_elements()) < 0.20);
}

TEST_CASE("sylnet: receptive field formula") {
  SylNetConfig c;
  CHECK(receptive_field(c) == 49);
  c.n_layers = 1;
  c.kernel_len = 1;
  CHECK(receptive_field(c) == 1);
  c.n_layers = 2;
  c.kernel_len = 3;
  CHECK(receptive_field(c) == 9);
  c.dilations = {1, 4};
  CHECK(receptive_field(c) == 1 + 2 * (2 + 5));
}

TEST_CASE("sylnet: perturbing one frame only changes activations inside the receptive field") {
  SylNetConfig c;
  c.n_layers = 3;
  c.n_channels = 6;
  c.kernel_len = 3;
  c.accumulator_width = 4;
  const SylNet model(c, 2);
  const int half = receptive_field(c) / 2;
  const Eigen::MatrixXd x = random_matrix(40, 24, 1);
  Eigen::MatrixXd y = x;
  y.row(20).array() += 0.5;
  const Eigen::MatrixXd diff = model.pre_accumulator(y) - model.pre_accumulator(x);
  for (Eigen::Index t = 0; t < diff.rows(); ++t)
    if (std::abs(t - 20) > half) CHECK(diff.row(t).cwiseAbs().maxCoeff() == 0.0);
  CHECK(diff.row(20).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("sylnet: construction and inference are deterministic") {
  const SylNet a(tiny_config(HeadKind::kScalar), 42), b(tiny_config(HeadKind::kScalar), 42);
  CHECK(a.params() == b.params());
  const SylNet c(tiny_config(HeadKind::kScalar), 43);
  CHECK_FALSE(a.params() == c.params());
  const Eigen::MatrixXd x = random_matrix(15, 24, 4);
  CHECK((a.forward(x).per_frame_head.array() == a.forward(x).per_frame_head.array()).all());
}

TEST_CASE("sylnet: trace final estimate is the last frame and matches the frozen path") {
  for (HeadKind head : {HeadKind::kScalar, HeadKind::kOrdinal}) {
    const SylNet model(tiny_config(head), 3);
    const Eigen::MatrixXd x = random_matrix(17, 24, 5);
    const ForwardTrace t = model.forward(x);
    CHECK(t.per_frame_head.rows() == 17);
    CHECK(t.per_frame_head.cols() == model.head_width());
    CHECK((t.final_estimate.array() == t.per_frame_head.row(16).array()).all());
    const ForwardTrace f = model.forward_from_frozen(model.encode_frozen(x), {});
    CHECK((f.per_frame_head - t.per_frame_head).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("sylnet: frozen-path gradients match the full path on tunable tensors only") {
  const SylNet model(tiny_config(HeadKind::kScalar), 8);
  const Eigen::MatrixXd x = random_matrix(12, 24, 6);
  ParamSet full = model.params().zeros_like(), frozen = model.params().zeros_like();
  model.forward_backward(x, {}, head_gradient_for(model, 4), full);
  model.forward_backward_from_frozen(model.encode_frozen(x), {}, head_gradient_for(model, 4), frozen);
  const ParamPartition part = model.partition();
  for (const auto& name : part.tunable)
    CHECK(relative_difference(full.at(name), frozen.at(name)) < 1e-12);
  for (const auto& name : part.frozen) CHECK(frozen.at(name).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sylnet: rejects bad input and bad configuration") {
  const SylNet model(tiny_config(HeadKind::kScalar), 1);
  CHECK_THROWS_AS(model.forward(Eigen::MatrixXd::Zero(5, 23)), DataError);
  CHECK_THROWS_AS(model.forward(Eigen::MatrixXd::Zero(0, 24)), DataError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(5, 24);
  bad(2, 3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(model.forward(bad));
  SylNetConfig c = tiny_config(HeadKind::kScalar);
  c.kernel_len = 4;
  CHECK_THROWS_AS(SylNet(c, 0), UsageError);
  c = tiny_config(HeadKind::kOrdinal);
  c.rank = 1;
  CHECK_THROWS_AS(SylNet(c, 0), UsageError);
}
