#include "sylcount/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sylcount/error.hpp"

namespace sylcount {

const char* to_string(HeadKind head) { return head == HeadKind::kScalar ? "scalar" : "ordinal"; }

HeadKind head_from_string(const std::string& text) {
  if (text == "scalar") return HeadKind::kScalar;
  if (text == "ordinal") return HeadKind::kOrdinal;
  throw UsageError("unknown head type '" + text + "' (expected scalar or ordinal)");
}

namespace {

void check_batch(const BatchPrediction& batch, HeadKind expected, const char* what) {
  if (batch.head != expected)
    throw UsageError(std::string(what) + " requires a " + to_string(expected) + "-head batch");
  if (batch.estimates.empty()) throw UsageError(std::string(what) + ": empty batch");
  if (batch.estimates.size() != batch.targets.size())
    throw UsageError(std::string(what) + ": estimates and targets differ in length");
  for (int s : batch.targets)
    if (s < 1) throw DataError(std::string(what) + ": target syllable counts must be >= 1");
}

void check_ordinal(const BatchPrediction& batch, std::span<const OrdinalTarget> targets) {
  check_batch(batch, HeadKind::kOrdinal, "ordinal_loss");
  if (targets.size() != batch.estimates.size())
    throw UsageError("ordinal_loss: encoded targets and estimates differ in length");
  for (std::size_t u = 0; u < targets.size(); ++u) {
    const auto& o_hat = batch.estimates[u];
    if (o_hat.size() != targets[u].bits.size())
      throw UsageError("ordinal_loss: activation vector length " + std::to_string(o_hat.size()) +
                       " != R-1 = " + std::to_string(targets[u].bits.size()));
    if ((o_hat.array() < 0.0).any() || (o_hat.array() > 1.0).any())
      throw DataError("ordinal_loss: activations must lie in [0, 1]");
  }
}

double ordinal_deviation(const Eigen::VectorXd& o_hat, const Eigen::VectorXd& o,
                         OrdinalLossForm form) {
  if (form == OrdinalLossForm::kEuclidean) return (o_hat - o).norm();
  const double radicand = o_hat.squaredNorm() - o.squaredNorm();
  return radicand > 0.0 ? std::sqrt(radicand) : 0.0;
}

}  // namespace

double l1_relative_loss(const BatchPrediction& batch) {
  check_batch(batch, HeadKind::kScalar, "l1_relative_loss");
  double sum = 0.0;
  for (std::size_t u = 0; u < batch.estimates.size(); ++u) {
    const double s = batch.targets[u];
    sum += std::abs(batch.estimates[u](0) - s) / s;
  }
  return sum / static_cast<double>(batch.estimates.size());
}

std::vector<Eigen::VectorXd> l1_relative_gradient(const BatchPrediction& batch) {
  check_batch(batch, HeadKind::kScalar, "l1_relative_loss");
  const double m = static_cast<double>(batch.estimates.size());
  std::vector<Eigen::VectorXd> grads;
  grads.reserve(batch.estimates.size());
  for (std::size_t u = 0; u < batch.estimates.size(); ++u) {
    const double s = batch.targets[u];
    const double diff = batch.estimates[u](0) - s;
    const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    grads.push_back(Eigen::VectorXd::Constant(1, sign / (s * m)));
  }
  return grads;
}

OrdinalTarget encode_ordinal(int count, int rank) {
  if (rank < 2) throw UsageError("encode_ordinal: rank must be >= 2");
  if (count < 1) throw DataError("encode_ordinal: count must be >= 1");
  OrdinalTarget t;
  t.count = count;
  t.rank = rank;
  t.bits = Eigen::VectorXd::Zero(rank - 1);
  for (int r = 1; r <= rank - 1; ++r) t.bits(r - 1) = count > r - 1 ? 1.0 : 0.0;
  return t;
}

double ordinal_loss(const BatchPrediction& batch, std::span<const OrdinalTarget> targets,
                    OrdinalLossForm form) {
  check_ordinal(batch, targets);
  double sum = 0.0;
  for (std::size_t u = 0; u < targets.size(); ++u)
    sum += ordinal_deviation(batch.estimates[u], targets[u].bits, form) / batch.targets[u];
  return sum / static_cast<double>(targets.size());
}

std::vector<Eigen::VectorXd> ordinal_loss_gradient(const BatchPrediction& batch,
                                                   std::span<const OrdinalTarget> targets,
                                                   OrdinalLossForm form) {
  check_ordinal(batch, targets);
  const double m = static_cast<double>(targets.size());
  std::vector<Eigen::VectorXd> grads;
  grads.reserve(targets.size());
  for (std::size_t u = 0; u < targets.size(); ++u) {
    const Eigen::VectorXd& o_hat = batch.estimates[u];
    const Eigen::VectorXd& o = targets[u].bits;
    const double scale = 1.0 / (batch.targets[u] * m);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(o_hat.size());
    if (form == OrdinalLossForm::kEuclidean) {
      const double dist = (o_hat - o).norm();
      if (dist > 0.0) g = (o_hat - o) * (scale / dist);
    } else {
      const double radicand = o_hat.squaredNorm() - o.squaredNorm();
      if (radicand > 0.0) g = o_hat * (scale / std::sqrt(radicand));
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

int decode_ordinal(const Eigen::Ref<const Eigen::VectorXd>& activations) {
  int n = 0;
  for (Eigen::Index i = 0; i < activations.size(); ++i)
    if (activations(i) > 0.5) ++n;
  return n;
}

double relative_error(std::span<const double> predictions, std::span<const int> targets) {
  if (predictions.size() != targets.size())
    throw UsageError("relative_error: predictions and targets differ in length");
  if (predictions.empty()) throw UsageError("relative_error: no predictions");
  double sum = 0.0;
  for (std::size_t u = 0; u < predictions.size(); ++u) {
    if (targets[u] < 1) throw DataError("relative_error: targets must be >= 1");
    sum += std::abs(std::max(0.0, predictions[u]) - targets[u]) / targets[u];
  }
  return sum / static_cast<double>(predictions.size());
}

double reported_estimate(HeadKind head, const Eigen::Ref<const Eigen::VectorXd>& final_output) {
  if (head == HeadKind::kOrdinal) return decode_ordinal(final_output);
  return std::max(0.0, final_output(0));
}

}  // namespace sylcount
