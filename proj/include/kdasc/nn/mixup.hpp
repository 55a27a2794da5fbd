#pragma once

#include <span>
#include <string>
#include <vector>

#include "kdasc/error.hpp"

namespace kdasc::nn {

template <typename T>
struct MixupPair {
  double lambda = 1.0;
  std::span<const T> x1, x2;
  std::span<const double> y1, y2;
};

template <typename T>
struct MixedSample {
  std::vector<T> input;
  std::vector<double> target;
};

// x = lambda * x1 + (1 - lambda) * x2, and likewise for the targets.
template <typename T>
MixedSample<T> mixup(const MixupPair<T>& pair) {
  if (!(pair.lambda >= 0.0 && pair.lambda <= 1.0)) {
    throw ValidationError("mixup: lambda " + std::to_string(pair.lambda) + " outside [0, 1]");
  }
  if (pair.x1.size() != pair.x2.size() || pair.y1.size() != pair.y2.size()) {
    throw ShapeError("mixup: paired inputs or targets differ in size");
  }
  const double l = pair.lambda;
  const double r = 1.0 - l;
  MixedSample<T> out;
  out.input.resize(pair.x1.size());
  for (std::size_t i = 0; i < pair.x1.size(); ++i) {
    out.input[i] = static_cast<T>(l * static_cast<double>(pair.x1[i]) + r * static_cast<double>(pair.x2[i]));
  }
  out.target.resize(pair.y1.size());
  for (std::size_t i = 0; i < pair.y1.size(); ++i) out.target[i] = l * pair.y1[i] + r * pair.y2[i];
  return out;
}

}  // namespace kdasc::nn
