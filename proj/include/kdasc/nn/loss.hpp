#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "kdasc/error.hpp"
#include "kdasc/nn/tensor.hpp"

namespace kdasc::nn {

inline constexpr double kProbabilityFloor = 1e-12;

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;  // dL/dpred
};

// Mean over the batch of -sum_c target_c * log(max(pred_c, 1e-12)).
// Targets must lie on the simplex (within 1e-6).
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.rank() != 2 || pred.shape() != target.shape()) {
    throw ShapeError("cross_entropy: pred " + shape_string(pred.shape()) + " vs target " +
                     shape_string(target.shape()));
  }
  const std::size_t n = pred.dim(0), c = pred.dim(1);
  for (std::size_t b = 0; b < n; ++b) {
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double t = static_cast<double>(target[b * c + k]);
      if (!(t >= -1e-6)) throw ValidationError("cross_entropy: negative target in row " + std::to_string(b));
      sum += t;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ValidationError("cross_entropy: target row " + std::to_string(b) + " sums to " + std::to_string(sum));
    }
  }
  LossResult<T> r{0.0, Tensor<T>(pred.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double t = static_cast<double>(target[i]);
    if (t == 0.0) continue;
    const double p = std::max(static_cast<double>(pred[i]), kProbabilityFloor);
    r.value -= t * std::log(p);
    r.grad[i] = static_cast<T>(-t / p * inv_n);
  }
  r.value *= inv_n;
  return r;
}

// Mean over batch and feature axes of (pred - target)^2.
template <typename T>
LossResult<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse: pred " + shape_string(pred.shape()) + " vs target " + shape_string(target.shape()));
  }
  LossResult<T> r{0.0, Tensor<T>(pred.shape())};
  const double inv = 1.0 / static_cast<double>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    r.value += d * d;
    r.grad[i] = static_cast<T>(2.0 * d * inv);
  }
  r.value *= inv;
  return r;
}

}  // namespace kdasc::nn
