#pragma once

#include <cstdint>
#include <vector>

#include "sylcount/model.hpp"

namespace sylcount {

struct SylNetConfig {
  int input_dim = 24;
  int n_layers = 10;       // N
  int n_channels = 128;    // K
  int kernel_len = 5;      // w, odd
  int accumulator_width = 128;
  HeadKind head = HeadKind::kScalar;
  int rank = 0;            // R, ordinal head only
  double dropout_rate = 0.5;
  // Per-layer dilation of the N residual layers; empty means all 1.
  std::vector<int> dilations;

  void validate() const;
  int head_width() const { return head == HeadKind::kOrdinal ? rank - 1 : 1; }
  int dilation(int layer) const { return dilations.empty() ? 1 : dilations[layer]; }

  nlohmann::json to_json() const;
  static SylNetConfig from_json(const nlohmann::json& j);
};

// Span of input frames that can influence one pre-accumulator activation:
// the input convolution, the N layer convolutions and the PostNet
// convolution, all centered. 1 + (N + 2)(w - 1) without dilation.
int receptive_field(const SylNetConfig& config);

// Gated convolutional stack with residual and skip connections, followed by
// the PostNet: sum of skip projections, convolution, ReLU, forward LSTM
// accumulator and a dense head applied at every frame.
class SylNet final : public CountModel {
 public:
  // Deterministic given seed: fan-in scaled uniform weights, zero biases.
  SylNet(const SylNetConfig& config, std::uint64_t seed);

  const SylNetConfig& config() const { return config_; }

  std::string kind() const override { return "sylnet"; }
  HeadKind head() const override { return config_.head; }
  int head_width() const override { return config_.head_width(); }
  int input_dim() const override { return config_.input_dim; }
  int rank() const override { return config_.head == HeadKind::kOrdinal ? config_.rank : 0; }

  ParamSet& params() override { return params_; }
  const ParamSet& params() const override { return params_; }
  // conv stack: input unit and per-layer gated/residual tensors.
  // PostNet: skip projections, PostNet convolution, LSTM and head.
  ParamPartition partition() const override;

  using CountModel::forward;
  ForwardTrace forward(const Eigen::MatrixXd& features, nn::Dropout dropout) const override;
  Eigen::VectorXd forward_backward(const Eigen::MatrixXd& features, nn::Dropout dropout,
                                   const HeadGradient& head_grad, ParamSet& grads) const override;

  // The dropout-free gated outputs of the N layers (the skip inputs).
  FrozenEncoding encode_frozen(const Eigen::MatrixXd& features) const override;
  ForwardTrace forward_from_frozen(const FrozenEncoding& encoding,
                                   nn::Dropout dropout) const override;
  Eigen::VectorXd forward_backward_from_frozen(const FrozenEncoding& encoding, nn::Dropout dropout,
                                               const HeadGradient& head_grad,
                                               ParamSet& grads) const override;

  // Inference-mode PostNet activations just before the LSTM (after ReLU).
  // Used to probe temporal locality of the convolutional part.
  Eigen::MatrixXd pre_accumulator(const Eigen::MatrixXd& features) const;

  std::unique_ptr<CountModel> clone() const override { return std::make_unique<SylNet>(*this); }
  nlohmann::json config_json() const override { return config_.to_json(); }

 private:
  struct LayerIndex {
    std::size_t filter_w, filter_b, gate_w, gate_b;
    std::size_t residual_w, residual_b, skip_w, skip_b;
  };
  struct StackCache;
  struct PostNetCache;

  nn::GatedConvWeights gated_weights(const LayerIndex& idx, int dilation) const;
  static nn::GatedConvGrads gated_grads(const LayerIndex& idx, ParamSet& grads);

  void run_stack(const Eigen::MatrixXd& features, nn::Dropout dropout, StackCache& cache) const;
  void run_postnet(const FrozenEncoding& skips_in, nn::Dropout dropout, PostNetCache& cache) const;
  ForwardTrace trace_from(const PostNetCache& cache) const;
  // Returns dL/d(skip input) per layer.
  std::vector<Eigen::MatrixXd> backward_postnet(const FrozenEncoding& skips_in,
                                                const PostNetCache& cache,
                                                const HeadGradient& head_grad,
                                                Eigen::VectorXd& final_output,
                                                ParamSet& grads) const;
  void validate_input(const Eigen::MatrixXd& features) const;

  SylNetConfig config_;
  ParamSet params_;
  LayerIndex input_{};
  std::vector<LayerIndex> layers_;
  std::size_t post_conv_w_ = 0, post_conv_b_ = 0;
  std::size_t lstm_wx_ = 0, lstm_wh_ = 0, lstm_b_ = 0;
  std::size_t head_w_ = 0, head_b_ = 0;
};

}  // namespace sylcount
