#include "kdasc/fusion/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "kdasc/error.hpp"

namespace kdasc {

void validate_posterior(std::span<const double> p, double tol) {
  if (p.empty()) throw ValidationError("posterior is empty");
  double sum = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (!(p[c] >= 0.0 && p[c] <= 1.0)) {
      throw ValidationError("posterior component " + std::to_string(c) + " outside [0, 1]");
    }
    sum += p[c];
  }
  if (std::abs(sum - 1.0) > tol) throw ValidationError("posterior does not sum to 1");
}

FusionResult prod_fuse(std::span<const ClassPosterior> posteriors) {
  if (posteriors.empty()) throw ValidationError("prod_fuse needs at least one posterior");
  const std::size_t c = posteriors.front().size();
  if (c == 0) throw ValidationError("prod_fuse: empty posterior");
  for (const auto& p : posteriors) {
    if (p.size() != c) throw ValidationError("prod_fuse: posteriors differ in length");
    for (double v : p) {
      if (std::isnan(v) || v < 0.0) throw ValidationError("prod_fuse: negative or NaN component");
    }
  }
  // Terms are summed in sorted order so the result is bit-identical under any
  // permutation of the models.
  std::vector<double> logsum(c, 0.0), terms(posteriors.size());
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t s = 0; s < posteriors.size(); ++s) {
      const double v = posteriors[s][k];
      terms[s] = v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
    }
    std::sort(terms.begin(), terms.end());
    for (double t : terms) logsum[k] += t;
  }
  FusionResult r;
  r.num_models = posteriors.size();
  r.predicted_label = decide_label(logsum);
  const double log_s = std::log(static_cast<double>(r.num_models));
  r.fused.resize(c);
  r.log_fused.resize(c);
  for (std::size_t k = 0; k < c; ++k) {
    r.log_fused[k] = logsum[k] - log_s;
    r.fused[k] = std::exp(r.log_fused[k]);
  }
  return r;
}

std::size_t decide_label(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("decide_label: empty vector");
  std::size_t best = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (std::isnan(scores[k])) throw ValidationError("decide_label: NaN at index " + std::to_string(k));
    if (scores[k] > scores[best]) best = k;
  }
  return best;
}

std::vector<double> renormalize(const FusionResult& r) {
  const std::size_t c = r.log_fused.size();
  double top = -std::numeric_limits<double>::infinity();
  for (double v : r.log_fused) top = std::max(top, v);
  std::vector<double> out(c, 1.0 / static_cast<double>(c));
  if (!std::isfinite(top)) return out;
  double sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    out[k] = std::exp(r.log_fused[k] - top);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return out;
}

}  // namespace kdasc
