#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sylcount {

enum class HeadKind { kScalar, kOrdinal };

const char* to_string(HeadKind head);
HeadKind head_from_string(const std::string& text);

// Final-frame model outputs for a minibatch. Scalar-head estimates are
// 1-vectors; ordinal-head estimates are the R-1 sigmoid activations.
struct BatchPrediction {
  HeadKind head = HeadKind::kScalar;
  std::vector<Eigen::VectorXd> estimates;
  std::vector<int> targets;
};

struct OrdinalTarget {
  Eigen::VectorXd bits;  // R-1 entries, ones then zeros
  int count = 0;
  int rank = 0;
};

// Mean over the batch of |s_hat - s| / s.
double l1_relative_loss(const BatchPrediction& batch);
// d loss / d estimate for every utterance (subgradient 0 at s_hat = s).
std::vector<Eigen::VectorXd> l1_relative_gradient(const BatchPrediction& batch);

// Bit r (1-based) is set iff count > r - 1; counts >= R saturate.
OrdinalTarget encode_ordinal(int count, int rank);

// How the per-utterance deviation between activations and target bits is
// reduced. kEuclidean is ||o_hat - o||_2. kLiteralClamped evaluates
// sqrt(max(0, sum(o_hat^2 - o^2))) and exists for comparison only.
enum class OrdinalLossForm { kEuclidean, kLiteralClamped };

// Mean over the batch of deviation(o_hat_u, o_u) / s_u.
double ordinal_loss(const BatchPrediction& batch, std::span<const OrdinalTarget> targets,
                    OrdinalLossForm form = OrdinalLossForm::kEuclidean);
std::vector<Eigen::VectorXd> ordinal_loss_gradient(
    const BatchPrediction& batch, std::span<const OrdinalTarget> targets,
    OrdinalLossForm form = OrdinalLossForm::kEuclidean);

// Number of activations strictly above 0.5.
int decode_ordinal(const Eigen::Ref<const Eigen::VectorXd>& activations);

// Mean relative count error over reporting-time estimates: predictions are clamped at 0 first.
double relative_error(std::span<const double> predictions, std::span<const int> targets);

// Reporting-time count from a final head output: the clamped scalar
// estimate or the decoded ordinal count.
double reported_estimate(HeadKind head, const Eigen::Ref<const Eigen::VectorXd>& final_output);

}  // namespace sylcount
