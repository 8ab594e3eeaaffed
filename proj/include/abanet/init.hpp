#pragma once

#include "abanet/tape.hpp"
#include "abanet/tensor.hpp"

namespace abanet {

// Glorot/Xavier uniform, limit sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor uniform(Shape shape, double limit, Rng& rng);

}  // namespace abanet
