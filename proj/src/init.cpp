#include "abanet/init.hpp"

#include <cmath>

namespace abanet {

Tensor uniform(Shape shape, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform(std::move(shape), std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

}  // namespace abanet
