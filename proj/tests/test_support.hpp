#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sylcount/model.hpp"
#include "sylcount/objectives.hpp"
#include "sylcount/random.hpp"

namespace sylcount::testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                     double scale = 1.0) {
  Rng rng(seed);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// Loss of one utterance evaluated from an inference forward pass only.
inline double utterance_loss(const CountModel& model, const Eigen::MatrixXd& x, int target) {
  const ForwardTrace trace = model.forward(x);
  BatchPrediction batch;
  batch.head = model.head();
  batch.estimates.push_back(trace.final_estimate.transpose());
  batch.targets.push_back(target);
  if (model.head() == HeadKind::kScalar) return l1_relative_loss(batch);
  const OrdinalTarget t = encode_ordinal(target, model.rank());
  return ordinal_loss(batch, std::span<const OrdinalTarget>(&t, 1));
}

inline HeadGradient head_gradient_for(const CountModel& model, int target) {
  const HeadKind head = model.head();
  const int rank = model.rank();
  return [head, rank, target](const Eigen::VectorXd& out) -> Eigen::VectorXd {
    BatchPrediction batch;
    batch.head = head;
    batch.estimates.push_back(out);
    batch.targets.push_back(target);
    if (head == HeadKind::kScalar) return l1_relative_gradient(batch)[0];
    const OrdinalTarget t = encode_ordinal(target, rank);
    return ordinal_loss_gradient(batch, std::span<const OrdinalTarget>(&t, 1))[0];
  };
}

// Central finite-difference gradient of utterance_loss for every tensor.
inline ParamSet finite_difference_gradient(CountModel& model, const Eigen::MatrixXd& x, int target,
                                           double step = 1e-6) {
  ParamSet grads = model.params().zeros_like();
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    Eigen::MatrixXd& p = model.params()[i];
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double saved = p.data()[k];
      p.data()[k] = saved + step;
      const double up = utterance_loss(model, x, target);
      p.data()[k] = saved - step;
      const double down = utterance_loss(model, x, target);
      p.data()[k] = saved;
      grads[i].data()[k] = (up - down) / (2.0 * step);
    }
  }
  return grads;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_difference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale < 1e-12) return 0.0;
  return (a - b).norm() / scale;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sylcount_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sylcount::testing
