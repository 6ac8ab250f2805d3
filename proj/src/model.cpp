#include "sylcount/model.hpp"

#include <cmath>

namespace sylcount {

void init_uniform_fan_in(Eigen::MatrixXd& tensor, Eigen::Index fan_in, Rng& rng) {
  const double limit = std::sqrt(3.0 / static_cast<double>(std::max<Eigen::Index>(1, fan_in)));
  for (Eigen::Index c = 0; c < tensor.cols(); ++c)
    for (Eigen::Index r = 0; r < tensor.rows(); ++r) tensor(r, c) = rng.uniform(-limit, limit);
}

}  // namespace sylcount
