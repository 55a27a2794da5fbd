#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kdasc/model/spec.hpp"
#include "kdasc/nn/layers.hpp"
#include "kdasc/nn/tensor.hpp"
#include "kdasc/rng.hpp"

namespace kdasc {

// Executable network instantiated from a ModelSpec. Single-threaded; one
// instance per training run. T is float for training, double for checks.
template <typename T>
class Network {
 public:
  Network(ModelSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)), dropout_rng_(mix_seed(init_seed, 1)) {
    validate(spec_);
    const auto shapes = infer_shapes(spec_);
    Rng init_rng(mix_seed(init_seed, 0));
    ActShape in = input_act_shape(spec_);
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      layers_.push_back(make_layer(spec_.layers[i], layer_name(spec_, i), in, init_rng));
      in = shapes[i];
    }
  }

  const ModelSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return layers_.size(); }
  nn::Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

  // Reseeds the dropout mask stream.
  void seed_dropout(std::uint64_t seed) { dropout_rng_ = Rng(seed); }

  // Batch forward; x is N x H x W x C. Keeps the embedding tap activation.
  nn::Tensor<T> forward(const nn::Tensor<T>& x, nn::Mode mode) {
    check_input(x);
    if (mode == nn::Mode::Eval) require_eval_ready();
    const nn::ForwardContext ctx{mode, &dropout_rng_};
    nn::Tensor<T> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i]->forward(h, ctx);
      if (i == spec_.embedding_tap_index()) embedding_ = h;
    }
    return h;
  }

  // Every layer's output, for instrumentation and tap checks.
  std::vector<nn::Tensor<T>> forward_all(const nn::Tensor<T>& x, nn::Mode mode) {
    check_input(x);
    if (mode == nn::Mode::Eval) require_eval_ready();
    const nn::ForwardContext ctx{mode, &dropout_rng_};
    std::vector<nn::Tensor<T>> outs;
    nn::Tensor<T> h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i]->forward(h, ctx);
      outs.push_back(h);
    }
    embedding_ = outs[spec_.embedding_tap_index()];
    return outs;
  }

  // Activation at the embedding tap (post-ReLU FC64) from the last forward.
  const nn::Tensor<T>& embedding() const { return embedding_; }

  // Back-propagates grad_out (dL/d output) plus an optional extra gradient
  // injected at the embedding tap. Parameter gradients accumulate.
  nn::Tensor<T> backward(const nn::Tensor<T>& grad_out, const nn::Tensor<T>* embedding_grad = nullptr) {
    nn::Tensor<T> g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (embedding_grad != nullptr && i == spec_.embedding_tap_index()) {
        if (embedding_grad->shape() != g.shape()) throw ShapeError("embedding gradient shape mismatch");
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += (*embedding_grad)[k];
      }
      g = layers_[i]->backward(g);
    }
    return g;
  }

  std::vector<nn::Parameter<T>*> parameters() {
    std::vector<nn::Parameter<T>*> out;
    for (auto& l : layers_) {
      for (auto* p : l->parameters()) out.push_back(p);
    }
    return out;
  }

  // Parameters and running statistics in parameter_layout() order.
  std::vector<std::pair<std::string, nn::Tensor<T>*>> stored_tensors() {
    std::vector<std::pair<std::string, nn::Tensor<T>*>> out;
    for (auto& l : layers_) {
      for (auto* p : l->parameters()) out.emplace_back(p->name, &p->value);
      for (auto s : l->state()) out.emplace_back(s.name, s.value);
    }
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->grad.fill(T{0});
  }

  bool ready_for_eval() const {
    for (const auto& l : layers_) {
      if (!l->ready_for_eval()) return false;
    }
    return true;
  }
  void mark_ready_for_eval() {
    for (auto& l : layers_) l->mark_ready_for_eval();
  }

 private:
  void check_input(const nn::Tensor<T>& x) const {
    const auto& s = spec_.input_shape;
    if (x.rank() != 4 || x.dim(1) != s[0] || x.dim(2) != s[1] || x.dim(3) != s[2]) {
      throw ShapeError(spec_.name + ": expected N x " + std::to_string(s[0]) + " x " + std::to_string(s[1]) + " x " +
                       std::to_string(s[2]) + " input, got " + nn::shape_string(x.shape()));
    }
  }

  void require_eval_ready() const {
    if (!ready_for_eval()) {
      throw StateError(spec_.name + ": eval-mode forward before batch norm statistics were initialized");
    }
  }

  static std::unique_ptr<nn::Layer<T>> make_layer(const LayerSpec& l, const std::string& name, const ActShape& in,
                                                  Rng& rng) {
    switch (l.kind) {
      case LayerKind::Conv2D: {
        auto c = std::make_unique<nn::Conv2D<T>>(name, in.back(), l.units, l.kernel_h, l.kernel_w);
        c->init(rng);
        return c;
      }
      case LayerKind::BatchNorm:
        return std::make_unique<nn::BatchNorm<T>>(name, in.back());
      case LayerKind::ReLU:
        return std::make_unique<nn::ReLU<T>>(name);
      case LayerKind::AvgPool:
        return std::make_unique<nn::AvgPool<T>>(name, l.pool_h, l.pool_w);
      case LayerKind::GlobalAvgPool:
        return std::make_unique<nn::GlobalAvgPool<T>>(name);
      case LayerKind::Dropout:
        return std::make_unique<nn::Dropout<T>>(name, l.dropout_rate);
      case LayerKind::Dense: {
        std::size_t fan_in = 1;
        for (auto e : in) fan_in *= e;
        auto d = std::make_unique<nn::Dense<T>>(name, fan_in, l.units);
        d->init(rng);
        return d;
      }
      case LayerKind::Softmax:
        return std::make_unique<nn::Softmax<T>>(name);
      case LayerKind::Residual: {
        auto r = std::make_unique<nn::ResidualBlock<T>>(name, in.back(), l.units, l.kernel_h);
        r->init(rng);
        return r;
      }
    }
    throw ShapeError(name + ": unknown layer kind");
  }

  ModelSpec spec_;
  std::vector<std::unique_ptr<nn::Layer<T>>> layers_;
  Rng dropout_rng_;
  nn::Tensor<T> embedding_;
};

}  // namespace kdasc
