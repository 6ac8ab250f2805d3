#include "doctest.h"

#include <cmath>

#include "sylcount/blstm.hpp"
#include "sylcount/error.hpp"
#include "test_support.hpp"

using namespace sylcount;
using namespace sylcount::testing;

namespace {

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// One-cell LSTM over a sequence of input vectors; returns hidden states in
// input order.
std::vector<double> one_cell(const std::vector<std::vector<double>>& xs, const Eigen::MatrixXd& wx,
                             const Eigen::MatrixXd& wh, const Eigen::MatrixXd& b, bool reverse) {
  const int n = static_cast<int>(xs.size());
  std::vector<double> out(n);
  double h = 0.0, c = 0.0;
  for (int s = 0; s < n; ++s) {
    const int t = reverse ? n - 1 - s : s;
    double pre[4];
    for (int g = 0; g < 4; ++g) {
      pre[g] = b(0, g) + wh(0, g) * h;
      for (std::size_t i = 0; i < xs[t].size(); ++i) pre[g] += wx(i, g) * xs[t][i];
    }
    const double in = sig(pre[0]), f = sig(pre[1] + nn::kForgetBias), g = std::tanh(pre[2]),
                 o = sig(pre[3]);
    c = f * c + in * g;
    h = o * std::tanh(c);
    out[t] = h;
  }
  return out;
}

BlstmCountConfig unit_config() {
  BlstmCountConfig c;
  c.input_dim = 1;
  c.cells_per_direction = 1;
  c.n_bidirectional_layers = 1;
  return c;
}

}  // namespace

TEST_CASE("blstm_count: hand-computed forward pass with one cell and two frames") {
  BlstmCount model(unit_config(), 4);
  Rng rng(9);
  for (std::size_t i = 0; i < model.params().size(); ++i)
    for (Eigen::Index k = 0; k < model.params()[i].size(); ++k)
      model.params()[i].data()[k] = rng.uniform(-1.0, 1.0);
  const ParamSet& p = model.params();
  Eigen::MatrixXd x(2, 1);
  x << 0.7, -1.3;
  const std::vector<std::vector<double>> xs{{0.7}, {-1.3}};
  const auto f = one_cell(xs, p.at("blstm.0.fwd.wx"), p.at("blstm.0.fwd.wh"), p.at("blstm.0.fwd.bias"), false);
  const auto b = one_cell(xs, p.at("blstm.0.bwd.wx"), p.at("blstm.0.bwd.wh"), p.at("blstm.0.bwd.bias"), true);
  const auto top = one_cell({{f[0], b[0]}, {f[1], b[1]}}, p.at("output.lstm.wx"), p.at("output.lstm.wh"),
                            p.at("output.lstm.bias"), false);
  const ForwardTrace trace = model.forward(x);
  for (int t = 0; t < 2; ++t)
    CHECK(trace.per_frame_head(t, 0) ==
          doctest::Approx(top[t] * p.at("output.weight")(0, 0) + p.at("output.bias")(0, 0)).epsilon(1e-12));
}

TEST_CASE("blstm_count: analytic gradients match finite differences") {
  for (const BlstmCountConfig& c : {unit_config(), [] {
         BlstmCountConfig d;
         d.input_dim = 3;
         d.cells_per_direction = 2;
         d.n_bidirectional_layers = 2;
         return d;
       }()}) {
    BlstmCount model(c, 5);
    Rng rng(6);
    for (std::size_t i = 0; i < model.params().size(); ++i)
      if (model.params().name(i).find("bias") != std::string::npos)
        for (Eigen::Index k = 0; k < model.params()[i].size(); ++k)
          model.params()[i].data()[k] = rng.uniform(-0.3, 0.3);
    const Eigen::MatrixXd x = random_matrix(12, c.input_dim, 7);
    ParamSet analytic = model.params().zeros_like();
    model.forward_backward(x, {}, head_gradient_for(model, 3), analytic);
    const ParamSet numeric = finite_difference_gradient(model, x, 3);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      CAPTURE(analytic.name(i));
      CHECK(relative_difference(analytic[i], numeric[i]) <= 1e-4);
    }
  }
}

TEST_CASE("blstm_count: parameter count and adaptation partition") {
  const BlstmCount model(BlstmCountConfig{}, 0);
  const long h = 60, d = 24;
  const long lstm_in_d = 4 * h * (d + h + 1), lstm_in_2h = 4 * h * (2 * h + h + 1);
  CHECK(model.params().total_elements() == 2 * lstm_in_d + 2 * lstm_in_2h + lstm_in_2h + h + 1);
  const ParamPartition part = model.partition();
  long tunable = 0, frozen = 0;
  for (const auto& n : part.tunable) {
    CHECK(n.rfind("output.", 0) == 0);
    tunable += model.params().at(n).size();
  }
  for (const auto& n : part.frozen) frozen += model.params().at(n).size();
  CHECK(part.tunable.size() + part.frozen.size() == model.params().size());
  CHECK(tunable < frozen);
}

TEST_CASE("blstm_count: frozen path reproduces the full forward pass") {
  const BlstmCount model(BlstmCountConfig{}, 1);
  const Eigen::MatrixXd x = random_matrix(30, 24, 2);
  const ForwardTrace a = model.forward(x);
  const ForwardTrace b = model.forward_from_frozen(model.encode_frozen(x), {});
  CHECK((a.per_frame_head - b.per_frame_head).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("blstm_count: invalid configurations are rejected") {
  BlstmCountConfig c;
  c.cells_per_direction = 0;
  CHECK_THROWS_AS(BlstmCount(c, 0), UsageError);
  c = BlstmCountConfig{};
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(BlstmCount(c, 0), UsageError);
}
