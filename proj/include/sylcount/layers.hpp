#pragma once

// Building blocks with explicit forward and backward passes. Activations are
// T x C matrices (one row per frame). Weight layouts:
//   convolution  (width * in) x out, tap k occupies rows [k*in, (k+1)*in)
//   affine       in x out, bias 1 x out
//   LSTM         wx in x 4H, wh H x 4H, bias 1 x 4H; gate order i, f, g, o

#include <Eigen/Dense>

#include "sylcount/random.hpp"

namespace sylcount::nn {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

// Dropout source for a training-mode pass. Disabled when rate is 0 or rng is
// null, which is exactly inference mode.
struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }
};

// Inverted dropout applied in place; returns the mask (empty when inactive).
MatrixXd apply_dropout(MatrixXd& x, Dropout dropout);
// Multiplies by a mask produced by apply_dropout (no-op for an empty mask).
void apply_mask(MatrixXd& x, const MatrixXd& mask);

// Centered ("same") convolution over time with zero padding and dilation.
MatrixXd conv1d(const MatrixXd& x, const MatrixXd& weight, const MatrixXd& bias, int width,
                int dilation);
// Accumulates weight/bias gradients; returns dL/dx when want_dx is set
// (otherwise an empty matrix).
MatrixXd conv1d_backward(const MatrixXd& x, const MatrixXd& weight, int width, int dilation,
                         const MatrixXd& dy, MatrixXd& dweight, MatrixXd& dbias, bool want_dx);

MatrixXd affine(const MatrixXd& x, const MatrixXd& weight, const MatrixXd& bias);
MatrixXd affine_backward(const MatrixXd& x, const MatrixXd& weight, const MatrixXd& dy,
                         MatrixXd& dweight, MatrixXd& dbias);

// tanh(filter * x) .* sigmoid(gate * x), followed by dropout.
struct GatedConvCache {
  MatrixXd tanh_filter;
  MatrixXd sigmoid_gate;
  MatrixXd mask;
  MatrixXd output;
};

struct GatedConvWeights {
  const MatrixXd& filter_weight;
  const MatrixXd& filter_bias;
  const MatrixXd& gate_weight;
  const MatrixXd& gate_bias;
  int width;
  int dilation;
};

struct GatedConvGrads {
  MatrixXd& filter_weight;
  MatrixXd& filter_bias;
  MatrixXd& gate_weight;
  MatrixXd& gate_bias;
};

GatedConvCache gated_conv(const MatrixXd& x, const GatedConvWeights& w, Dropout dropout);
MatrixXd gated_conv_backward(const MatrixXd& x, const GatedConvWeights& w,
                             const GatedConvCache& cache, const MatrixXd& doutput,
                             GatedConvGrads grads, bool want_dx);

struct LstmCache {
  MatrixXd gates;   // T x 4H post-activation [i f g o]
  MatrixXd cell;    // T x H
  MatrixXd tanh_cell;
  MatrixXd hidden;  // T x H
  bool reverse = false;
};

// Constant added to the forget-gate pre-activation, as in TensorFlow's
// LSTM cells, so a freshly initialized accumulator retains its state.
inline constexpr double kForgetBias = 1.0;

// Single-direction LSTM with zero initial state. reverse runs from the last
// frame to the first; outputs stay aligned with input frames.
LstmCache lstm(const MatrixXd& x, const MatrixXd& wx, const MatrixXd& wh, const MatrixXd& bias,
               bool reverse);
// dhidden is dL/d(hidden) for every frame. Accumulates parameter gradients
// and returns dL/dx (empty unless want_dx).
MatrixXd lstm_backward(const MatrixXd& x, const MatrixXd& wx, const MatrixXd& wh,
                       const LstmCache& cache, const MatrixXd& dhidden, MatrixXd& dwx,
                       MatrixXd& dwh, MatrixXd& dbias, bool want_dx);

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace sylcount::nn
