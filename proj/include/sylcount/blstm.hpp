#pragma once

#include <cstdint>
#include <vector>

#include "sylcount/model.hpp"

namespace sylcount {

struct BlstmCountConfig {
  int input_dim = 24;
  int cells_per_direction = 60;
  int n_bidirectional_layers = 2;
  double dropout_rate = 0.5;

  void validate() const;
  nlohmann::json to_json() const;
  static BlstmCountConfig from_json(const nlohmann::json& j);
};

// Stacked bidirectional LSTMs, then a forward LSTM whose hidden state is
// read out by a linear unit at every frame. Scalar head only.
class BlstmCount final : public CountModel {
 public:
  BlstmCount(const BlstmCountConfig& config, std::uint64_t seed);

  const BlstmCountConfig& config() const { return config_; }

  std::string kind() const override { return "blstm_count"; }
  HeadKind head() const override { return HeadKind::kScalar; }
  int head_width() const override { return 1; }
  int input_dim() const override { return config_.input_dim; }

  ParamSet& params() override { return params_; }
  const ParamSet& params() const override { return params_; }
  // Tunable: the final forward LSTM and its linear readout.
  ParamPartition partition() const override;

  using CountModel::forward;
  ForwardTrace forward(const Eigen::MatrixXd& features, nn::Dropout dropout) const override;
  Eigen::VectorXd forward_backward(const Eigen::MatrixXd& features, nn::Dropout dropout,
                                   const HeadGradient& head_grad, ParamSet& grads) const override;

  // Output of the bidirectional stack (one matrix).
  FrozenEncoding encode_frozen(const Eigen::MatrixXd& features) const override;
  ForwardTrace forward_from_frozen(const FrozenEncoding& encoding,
                                   nn::Dropout dropout) const override;
  Eigen::VectorXd forward_backward_from_frozen(const FrozenEncoding& encoding, nn::Dropout dropout,
                                               const HeadGradient& head_grad,
                                               ParamSet& grads) const override;

  std::unique_ptr<CountModel> clone() const override { return std::make_unique<BlstmCount>(*this); }
  nlohmann::json config_json() const override { return config_.to_json(); }

 private:
  struct LstmIndex {
    std::size_t wx, wh, b;
  };
  struct BiLayerCache {
    Eigen::MatrixXd input;
    nn::LstmCache fwd, bwd;
    Eigen::MatrixXd mask;
  };
  struct OutputCache {
    nn::LstmCache lstm;
    Eigen::MatrixXd hidden;
    Eigen::MatrixXd mask;
    Eigen::MatrixXd head_out;
  };

  Eigen::MatrixXd run_stack(const Eigen::MatrixXd& features, nn::Dropout dropout,
                            std::vector<BiLayerCache>& caches) const;
  void run_output(const Eigen::MatrixXd& stack_out, nn::Dropout dropout, OutputCache& cache) const;
  Eigen::MatrixXd backward_output(const Eigen::MatrixXd& stack_out, const OutputCache& cache,
                                  const HeadGradient& head_grad, Eigen::VectorXd& final_output,
                                  ParamSet& grads, bool want_dx) const;
  void validate_input(const Eigen::MatrixXd& features) const;

  BlstmCountConfig config_;
  ParamSet params_;
  std::vector<std::pair<LstmIndex, LstmIndex>> bi_layers_;
  LstmIndex out_lstm_{};
  std::size_t out_w_ = 0, out_b_ = 0;
};

}  // namespace sylcount
