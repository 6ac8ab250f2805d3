#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sylcount/layers.hpp"
#include "sylcount/objectives.hpp"
#include "sylcount/params.hpp"

namespace sylcount {

// Per-frame head outputs for one utterance. final_estimate is always the
// last row of per_frame_head.
struct ForwardTrace {
  Eigen::MatrixXd per_frame_head;
  Eigen::RowVectorXd final_estimate;
};

// Gradient of the loss with respect to the final-frame head output (the
// sigmoid activations for an ordinal head).
using HeadGradient = std::function<Eigen::VectorXd(const Eigen::VectorXd& final_output)>;

// Adaptation works on a cached encoding of the frozen part of the network:
// a list of activation matrices that the tunable part consumes.
using FrozenEncoding = std::vector<Eigen::MatrixXd>;

// Common interface of the end-to-end count estimators.
class CountModel {
 public:
  virtual ~CountModel() = default;

  virtual std::string kind() const = 0;
  virtual HeadKind head() const = 0;
  virtual int head_width() const = 0;
  virtual int input_dim() const = 0;
  // Ordinal rank R (0 for a scalar head).
  virtual int rank() const { return 0; }

  virtual ParamSet& params() = 0;
  virtual const ParamSet& params() const = 0;
  virtual ParamPartition partition() const = 0;

  // Inference when dropout is inactive, training mode otherwise.
  virtual ForwardTrace forward(const Eigen::MatrixXd& features, nn::Dropout dropout) const = 0;
  ForwardTrace forward(const Eigen::MatrixXd& features) const { return forward(features, {}); }

  // Training-mode pass: runs forward, backpropagates head_grad(final output)
  // and accumulates into grads (same layout as params()). Returns the final
  // head output.
  virtual Eigen::VectorXd forward_backward(const Eigen::MatrixXd& features, nn::Dropout dropout,
                                           const HeadGradient& head_grad,
                                           ParamSet& grads) const = 0;

  // Inference-mode activations of the frozen partition.
  virtual FrozenEncoding encode_frozen(const Eigen::MatrixXd& features) const = 0;
  virtual ForwardTrace forward_from_frozen(const FrozenEncoding& encoding,
                                           nn::Dropout dropout) const = 0;
  // Like forward_backward but starting from the frozen encoding; only
  // tunable tensors receive gradient.
  virtual Eigen::VectorXd forward_backward_from_frozen(const FrozenEncoding& encoding,
                                                       nn::Dropout dropout,
                                                       const HeadGradient& head_grad,
                                                       ParamSet& grads) const = 0;

  virtual std::unique_ptr<CountModel> clone() const = 0;
  virtual nlohmann::json config_json() const = 0;
};

// Reporting-time estimate (clamped scalar or decoded ordinal count).
inline double predict_count(const CountModel& model, const Eigen::MatrixXd& features) {
  const ForwardTrace trace = model.forward(features);
  return reported_estimate(model.head(), trace.final_estimate.transpose());
}

// Uniform in [-sqrt(3 / fan_in), sqrt(3 / fan_in)], i.e. unit-variance
// preserving for fan_in inputs.
void init_uniform_fan_in(Eigen::MatrixXd& tensor, Eigen::Index fan_in, Rng& rng);

}  // namespace sylcount
