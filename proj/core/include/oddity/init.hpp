#pragma once

#include <cmath>

#include "oddity/rng.hpp"
#include "oddity/tensor.hpp"

namespace oddity {

/// Glorot (fan-in/fan-out balanced) uniform initialization.
template <typename T>
Tensor<T> glorot_uniform(Shape shape, int fan_in, int fan_out, RngStream& rng,
                         bool requires_grad = true) {
  Tensor<T> t = Tensor<T>::zeros(std::move(shape), requires_grad);
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (int64_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
  return t;
}

}  // namespace oddity
