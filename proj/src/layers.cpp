#include "sylcount/layers.hpp"

#include <algorithm>
#include <cmath>

namespace sylcount::nn {

MatrixXd apply_dropout(MatrixXd& x, Dropout dropout) {
  if (!dropout.active()) return {};
  const double keep_scale = 1.0 / (1.0 - dropout.rate);
  MatrixXd mask(x.rows(), x.cols());
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    mask.data()[i] = dropout.rng->uniform() < dropout.rate ? 0.0 : keep_scale;
  x.array() *= mask.array();
  return mask;
}

void apply_mask(MatrixXd& x, const MatrixXd& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

namespace {

// Output rows [first, first + count) read input rows shifted by `offset`.
struct TapRange {
  Eigen::Index first = 0;
  Eigen::Index count = 0;
  Eigen::Index offset = 0;
};

TapRange tap_range(Eigen::Index frames, int tap, int width, int dilation) {
  const Eigen::Index offset = Eigen::Index(tap - (width - 1) / 2) * dilation;
  const Eigen::Index first = std::max<Eigen::Index>(0, -offset);
  const Eigen::Index last = std::min<Eigen::Index>(frames, frames - offset);
  return {first, std::max<Eigen::Index>(0, last - first), offset};
}

}  // namespace

MatrixXd conv1d(const MatrixXd& x, const MatrixXd& weight, const MatrixXd& bias, int width,
                int dilation) {
  const Eigen::Index in = x.cols();
  MatrixXd y(x.rows(), weight.cols());
  y.rowwise() = bias.row(0);
  for (int k = 0; k < width; ++k) {
    const TapRange r = tap_range(x.rows(), k, width, dilation);
    if (r.count == 0) continue;
    y.middleRows(r.first, r.count).noalias() +=
        x.middleRows(r.first + r.offset, r.count) * weight.middleRows(k * in, in);
  }
  return y;
}

MatrixXd conv1d_backward(const MatrixXd& x, const MatrixXd& weight, int width, int dilation,
                         const MatrixXd& dy, MatrixXd& dweight, MatrixXd& dbias, bool want_dx) {
  const Eigen::Index in = x.cols();
  dbias.row(0) += dy.colwise().sum();
  MatrixXd dx;
  if (want_dx) dx = MatrixXd::Zero(x.rows(), in);
  for (int k = 0; k < width; ++k) {
    const TapRange r = tap_range(x.rows(), k, width, dilation);
    if (r.count == 0) continue;
    dweight.middleRows(k * in, in).noalias() +=
        x.middleRows(r.first + r.offset, r.count).transpose() * dy.middleRows(r.first, r.count);
    if (want_dx)
      dx.middleRows(r.first + r.offset, r.count).noalias() +=
          dy.middleRows(r.first, r.count) * weight.middleRows(k * in, in).transpose();
  }
  return dx;
}

MatrixXd affine(const MatrixXd& x, const MatrixXd& weight, const MatrixXd& bias) {
  MatrixXd y = x * weight;
  y.rowwise() += bias.row(0);
  return y;
}

MatrixXd affine_backward(const MatrixXd& x, const MatrixXd& weight, const MatrixXd& dy,
                         MatrixXd& dweight, MatrixXd& dbias) {
  dweight.noalias() += x.transpose() * dy;
  dbias.row(0) += dy.colwise().sum();
  return dy * weight.transpose();
}

GatedConvCache gated_conv(const MatrixXd& x, const GatedConvWeights& w, Dropout dropout) {
  GatedConvCache c;
  c.tanh_filter = conv1d(x, w.filter_weight, w.filter_bias, w.width, w.dilation).array().tanh();
  c.sigmoid_gate = conv1d(x, w.gate_weight, w.gate_bias, w.width, w.dilation)
                       .unaryExpr([](double v) { return sigmoid(v); });
  c.output = c.tanh_filter.cwiseProduct(c.sigmoid_gate);
  c.mask = apply_dropout(c.output, dropout);
  return c;
}

MatrixXd gated_conv_backward(const MatrixXd& x, const GatedConvWeights& w,
                             const GatedConvCache& cache, const MatrixXd& doutput,
                             GatedConvGrads grads, bool want_dx) {
  MatrixXd dgated = doutput;
  apply_mask(dgated, cache.mask);
  const auto& th = cache.tanh_filter.array();
  const auto& sg = cache.sigmoid_gate.array();
  const MatrixXd dfilter = (dgated.array() * sg * (1.0 - th * th)).matrix();
  const MatrixXd dgate = (dgated.array() * th * sg * (1.0 - sg)).matrix();
  MatrixXd dx = conv1d_backward(x, w.filter_weight, w.width, w.dilation, dfilter,
                                grads.filter_weight, grads.filter_bias, want_dx);
  MatrixXd dx_gate = conv1d_backward(x, w.gate_weight, w.width, w.dilation, dgate,
                                     grads.gate_weight, grads.gate_bias, want_dx);
  if (want_dx) dx += dx_gate;
  return dx;
}

LstmCache lstm(const MatrixXd& x, const MatrixXd& wx, const MatrixXd& wh, const MatrixXd& bias,
               bool reverse) {
  const Eigen::Index frames = x.rows();
  const Eigen::Index h = wh.rows();
  LstmCache c;
  c.reverse = reverse;
  c.gates = x * wx;
  c.gates.rowwise() += bias.row(0);
  c.cell.resize(frames, h);
  c.tanh_cell.resize(frames, h);
  c.hidden.resize(frames, h);
  RowVectorXd h_prev = RowVectorXd::Zero(h);
  RowVectorXd c_prev = RowVectorXd::Zero(h);
  RowVectorXd pre(4 * h);
  for (Eigen::Index step = 0; step < frames; ++step) {
    const Eigen::Index t = reverse ? frames - 1 - step : step;
    pre.noalias() = c.gates.row(t) + h_prev * wh;
    auto g = c.gates.row(t);
    for (Eigen::Index j = 0; j < h; ++j) {
      g(j) = sigmoid(pre(j));
      g(h + j) = sigmoid(pre(h + j) + kForgetBias);
      g(2 * h + j) = std::tanh(pre(2 * h + j));
      g(3 * h + j) = sigmoid(pre(3 * h + j));
      const double cell = g(h + j) * c_prev(j) + g(j) * g(2 * h + j);
      const double tc = std::tanh(cell);
      c.cell(t, j) = cell;
      c.tanh_cell(t, j) = tc;
      c.hidden(t, j) = g(3 * h + j) * tc;
    }
    h_prev = c.hidden.row(t);
    c_prev = c.cell.row(t);
  }
  return c;
}

MatrixXd lstm_backward(const MatrixXd& x, const MatrixXd& wx, const MatrixXd& wh,
                       const LstmCache& cache, const MatrixXd& dhidden, MatrixXd& dwx,
                       MatrixXd& dwh, MatrixXd& dbias, bool want_dx) {
  const Eigen::Index frames = x.rows();
  const Eigen::Index h = wh.rows();
  MatrixXd dpre(frames, 4 * h);
  MatrixXd h_prev_rows = MatrixXd::Zero(frames, h);
  RowVectorXd dh_next = RowVectorXd::Zero(h);
  RowVectorXd dc_next = RowVectorXd::Zero(h);
  for (Eigen::Index step = frames - 1; step >= 0; --step) {
    const Eigen::Index t = cache.reverse ? frames - 1 - step : step;
    const bool first = step == 0;
    const Eigen::Index t_prev = cache.reverse ? t + 1 : t - 1;
    const auto g = cache.gates.row(t);
    for (Eigen::Index j = 0; j < h; ++j) {
      const double i = g(j), f = g(h + j), gg = g(2 * h + j), o = g(3 * h + j);
      const double tc = cache.tanh_cell(t, j);
      const double c_prev = first ? 0.0 : cache.cell(t_prev, j);
      const double dh = dhidden(t, j) + dh_next(j);
      const double dc = dc_next(j) + dh * o * (1.0 - tc * tc);
      dpre(t, j) = dc * gg * i * (1.0 - i);
      dpre(t, h + j) = dc * c_prev * f * (1.0 - f);
      dpre(t, 2 * h + j) = dc * i * (1.0 - gg * gg);
      dpre(t, 3 * h + j) = dh * tc * o * (1.0 - o);
      dc_next(j) = dc * f;
    }
    if (!first) h_prev_rows.row(t) = cache.hidden.row(t_prev);
    dh_next.noalias() = dpre.row(t) * wh.transpose();
  }
  dwx.noalias() += x.transpose() * dpre;
  dwh.noalias() += h_prev_rows.transpose() * dpre;
  dbias.row(0) += dpre.colwise().sum();
  if (!want_dx) return {};
  return dpre * wx.transpose();
}

}  // namespace sylcount::nn
