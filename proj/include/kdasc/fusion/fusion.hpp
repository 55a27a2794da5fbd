#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kdasc {

using ClassPosterior = std::vector<double>;

// Throws ValidationError unless p has components in [0, 1] summing to 1 within tol.
void validate_posterior(std::span<const double> p, double tol = 1e-6);

struct FusionResult {
  std::vector<double> fused;  // (1/S) * prod_s p_s; not normalized
  std::vector<double> log_fused;
  std::size_t predicted_label = 0;
  std::size_t num_models = 0;
};

// Product fusion in log space: fused_c = exp(sum_s log p_sc - log S).
FusionResult prod_fuse(std::span<const ClassPosterior> posteriors);

// Lowest-index argmax. Throws ValidationError on empty input or NaN.
std::size_t decide_label(std::span<const double> scores);

// Fused vector divided by its sum, evaluated from the log values so that
// products which underflow in linear space still normalize correctly.
std::vector<double> renormalize(const FusionResult& r);

}  // namespace kdasc
