#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "kdasc/error.hpp"
#include "kdasc/nn/layers.hpp"

namespace kdasc::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moments are kept in double regardless of T.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // The parameter list must be the same (same order) on every call.
  void step(const std::vector<Parameter<T>*>& params) {
    if (moments_.empty()) {
      for (auto* p : params) moments_.push_back({std::vector<double>(p->value.size(), 0.0),
                                                 std::vector<double>(p->value.size(), 0.0)});
    }
    if (moments_.size() != params.size()) throw StateError("Adam: parameter list changed between steps");
    for (auto* p : params) {
      if (!p->grad.all_finite()) {
        throw NonFiniteError("non-finite gradient in '" + p->name + "' at optimizer step " + std::to_string(t_ + 1));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& [m, v] = moments_[k];
      auto& value = params[k]->value;
      const auto& grad = params[k]->grad;
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        value[i] = static_cast<T>(static_cast<double>(value[i]) -
                                  config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon));
      }
    }
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  AdamConfig config_;
  std::vector<Moments> moments_;
  long t_ = 0;
};

}  // namespace kdasc::nn
