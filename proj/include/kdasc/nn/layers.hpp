#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kdasc/error.hpp"
#include "kdasc/nn/tensor.hpp"
#include "kdasc/rng.hpp"

namespace kdasc::nn {

enum class Mode { Train, Eval };

struct ForwardContext {
  Mode mode = Mode::Eval;
  Rng* rng = nullptr;  // required by dropout in train mode
};

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
};

// Non-trainable state that travels with checkpoints (BN running statistics).
template <typename T>
struct StateRef {
  std::string name;
  Tensor<T>* value;
};

template <typename T>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const { return name_; }

  virtual Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) = 0;
  // Returns dL/dx and accumulates parameter gradients into Parameter::grad.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;

  virtual std::vector<Parameter<T>*> parameters() { return {}; }
  virtual std::vector<StateRef<T>> state() { return {}; }
  // False only for batch norm layers that have never seen a training batch.
  virtual bool ready_for_eval() const { return true; }
  virtual void mark_ready_for_eval() {}

 protected:
  void require_cache(bool present) const {
    if (!present) throw StateError(name_ + ": backward called without a cached forward pass");
  }

 private:
  std::string name_;
};

// Kaiming-uniform: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
template <typename T>
void kaiming_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

// Stride-1 cross-correlation with "same" zero padding. For even kernels the
// extra padding row/column goes after the input (pad_before = (k - 1) / 2).
// Weights are kh x kw x Cin x Cout.
template <typename T>
class Conv2D final : public Layer<T> {
 public:
  Conv2D(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kh, std::size_t kw)
      : Layer<T>(std::move(name)),
        cin_(in_channels),
        cout_(out_channels),
        kh_(kh),
        kw_(kw),
        weight_(this->name() + ".weight", {kh, kw, in_channels, out_channels}),
        bias_(this->name() + ".bias", {out_channels}) {}

  void init(Rng& rng) {
    kaiming_uniform(weight_.value, kh_ * kw_ * cin_, rng);
    bias_.value.fill(T{0});
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    if (x.rank() != 4 || x.dim(3) != cin_) {
      throw ShapeError(this->name() + ": expected N x H x W x " + std::to_string(cin_) + " input, got " +
                       shape_string(x.shape()));
    }
    input_ = x;
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> y({n, h, w, cout_});
    const auto pt = static_cast<std::ptrdiff_t>((kh_ - 1) / 2);
    const auto pl = static_cast<std::ptrdiff_t>((kw_ - 1) / 2);
    const std::vector<double> wd(weight_.value.storage().begin(), weight_.value.storage().end());
    std::vector<double> acc(cout_);
    double* a = acc.data();
    const std::size_t cout = cout_;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oy = 0; oy < h; ++oy) {
        for (std::size_t ox = 0; ox < w; ++ox) {
          for (std::size_t co = 0; co < cout; ++co) a[co] = static_cast<double>(bias_.value[co]);
          for (std::size_t dy = 0; dy < kh_; ++dy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy + dy) - pt;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t dx = 0; dx < kw_; ++dx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox + dx) - pl;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const T* in = x.data() + ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * cin_;
              const double* wtap = wd.data() + (dy * kw_ + dx) * cin_ * cout;
              for (std::size_t ci = 0; ci < cin_; ++ci) {
                const double v = static_cast<double>(in[ci]);
                const double* wrow = wtap + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) a[co] += v * wrow[co];
              }
            }
          }
          T* out = y.data() + ((b * h + oy) * w + ox) * cout;
          for (std::size_t co = 0; co < cout; ++co) out[co] = static_cast<T>(a[co]);
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(!input_.empty());
    const Tensor<T>& x = input_;
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (grad_out.shape() != Shape{n, h, w, cout_}) throw ShapeError(this->name() + ": grad_out shape mismatch");
    const std::size_t cin = cin_, cout = cout_, taps = kh_ * kw_;
    const auto pt = static_cast<std::ptrdiff_t>((kh_ - 1) / 2);
    const auto pl = static_cast<std::ptrdiff_t>((kw_ - 1) / 2);
    const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);

    // Weights transposed to [tap][co][ci] so the input gradient gathers with
    // contiguous inner loops.
    std::vector<double> wt(weight_.value.size());
    for (std::size_t t = 0; t < taps; ++t) {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t co = 0; co < cout; ++co) {
          wt[(t * cout + co) * cin + ci] = static_cast<double>(weight_.value[(t * cin + ci) * cout + co]);
        }
      }
    }

    Tensor<T> gx(x.shape());
    std::vector<double> gacc(cin);
    double* ga = gacc.data();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t iy = 0; iy < h; ++iy) {
        for (std::size_t ix = 0; ix < w; ++ix) {
          for (std::size_t ci = 0; ci < cin; ++ci) ga[ci] = 0.0;
          for (std::size_t dy = 0; dy < kh_; ++dy) {
            const auto oy = static_cast<std::ptrdiff_t>(iy) + pt - static_cast<std::ptrdiff_t>(dy);
            if (oy < 0 || oy >= hh) continue;
            for (std::size_t dx = 0; dx < kw_; ++dx) {
              const auto ox = static_cast<std::ptrdiff_t>(ix) + pl - static_cast<std::ptrdiff_t>(dx);
              if (ox < 0 || ox >= ww) continue;
              const T* g = grad_out.data() + ((b * h + static_cast<std::size_t>(oy)) * w + static_cast<std::size_t>(ox)) * cout;
              const double* wtap = wt.data() + (dy * kw_ + dx) * cout * cin;
              for (std::size_t co = 0; co < cout; ++co) {
                const double gc = static_cast<double>(g[co]);
                const double* wr = wtap + co * cin;
                for (std::size_t ci = 0; ci < cin; ++ci) ga[ci] += gc * wr[ci];
              }
            }
          }
          T* gi = gx.data() + ((b * h + iy) * w + ix) * cin;
          for (std::size_t ci = 0; ci < cin; ++ci) gi[ci] = static_cast<T>(ga[ci]);
        }
      }
    }

    std::vector<double> gw(weight_.value.size(), 0.0);
    std::vector<double> gb(cout, 0.0);
    std::vector<double> gd(cout);
    double* gdp = gd.data();
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oy = 0; oy < h; ++oy) {
        for (std::size_t ox = 0; ox < w; ++ox) {
          const T* g = grad_out.data() + ((b * h + oy) * w + ox) * cout;
          for (std::size_t co = 0; co < cout; ++co) {
            gdp[co] = static_cast<double>(g[co]);
            gb[co] += gdp[co];
          }
          for (std::size_t dy = 0; dy < kh_; ++dy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy + dy) - pt;
            if (iy < 0 || iy >= hh) continue;
            for (std::size_t dx = 0; dx < kw_; ++dx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox + dx) - pl;
              if (ix < 0 || ix >= ww) continue;
              const T* in = x.data() + ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * cin;
              double* gtap = gw.data() + (dy * kw_ + dx) * cin * cout;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const double v = static_cast<double>(in[ci]);
                double* gwrow = gtap + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) gwrow[co] += v * gdp[co];
              }
            }
          }
        }
      }
    }
    for (std::size_t i = 0; i < gw.size(); ++i) weight_.grad[i] += static_cast<T>(gw[i]);
    for (std::size_t co = 0; co < cout; ++co) bias_.grad[co] += static_cast<T>(gb[co]);
    return gx;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t cin_, cout_, kh_, kw_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

// Per-channel (last axis) batch normalization.
template <typename T>
class BatchNorm final : public Layer<T> {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm(std::string name, std::size_t channels)
      : Layer<T>(std::move(name)),
        channels_(channels),
        gamma_(this->name() + ".gamma", {channels}),
        beta_(this->name() + ".beta", {channels}),
        running_mean_({channels}, T{0}),
        running_var_({channels}, T{1}) {
    gamma_.value.fill(T{1});
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override {
    if (x.rank() < 2 || x.shape().back() != channels_) {
      throw ShapeError(this->name() + ": expected last axis " + std::to_string(channels_) + ", got " +
                       shape_string(x.shape()));
    }
    const std::size_t m = x.size() / channels_;
    mean_.assign(channels_, 0.0);
    inv_std_.assign(channels_, 0.0);
    train_mode_ = ctx.mode == Mode::Train;
    if (train_mode_) {
      std::vector<double> sum(channels_, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.data() + i * channels_;
        for (std::size_t c = 0; c < channels_; ++c) sum[c] += static_cast<double>(row[c]);
      }
      for (std::size_t c = 0; c < channels_; ++c) mean_[c] = sum[c] / static_cast<double>(m);
      std::vector<double> sq(channels_, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.data() + i * channels_;
        for (std::size_t c = 0; c < channels_; ++c) {
          const double d = static_cast<double>(row[c]) - mean_[c];
          sq[c] += d * d;
        }
      }
      for (std::size_t c = 0; c < channels_; ++c) {
        const double var = sq[c] / static_cast<double>(m);
        inv_std_[c] = 1.0 / std::sqrt(var + kEpsilon);
        running_mean_[c] = static_cast<T>(kMomentum * static_cast<double>(running_mean_[c]) + (1.0 - kMomentum) * mean_[c]);
        running_var_[c] = static_cast<T>(kMomentum * static_cast<double>(running_var_[c]) + (1.0 - kMomentum) * var);
      }
      stats_ready_ = true;
    } else {
      if (!stats_ready_) {
        throw StateError(this->name() + ": eval-mode batch norm before any training step (running stats uninitialized)");
      }
      for (std::size_t c = 0; c < channels_; ++c) {
        mean_[c] = static_cast<double>(running_mean_[c]);
        inv_std_[c] = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kEpsilon);
      }
    }
    xhat_ = Tensor<T>(x.shape());
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < m; ++i) {
      const T* row = x.data() + i * channels_;
      T* xh = xhat_.data() + i * channels_;
      T* out = y.data() + i * channels_;
      for (std::size_t c = 0; c < channels_; ++c) {
        const double v = (static_cast<double>(row[c]) - mean_[c]) * inv_std_[c];
        xh[c] = static_cast<T>(v);
        out[c] = static_cast<T>(static_cast<double>(gamma_.value[c]) * v + static_cast<double>(beta_.value[c]));
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(!xhat_.empty());
    if (grad_out.shape() != xhat_.shape()) throw ShapeError(this->name() + ": grad_out shape mismatch");
    const std::size_t m = grad_out.size() / channels_;
    std::vector<double> sum_g(channels_, 0.0), sum_gx(channels_, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const T* g = grad_out.data() + i * channels_;
      const T* xh = xhat_.data() + i * channels_;
      for (std::size_t c = 0; c < channels_; ++c) {
        sum_g[c] += static_cast<double>(g[c]);
        sum_gx[c] += static_cast<double>(g[c]) * static_cast<double>(xh[c]);
      }
    }
    for (std::size_t c = 0; c < channels_; ++c) {
      gamma_.grad[c] += static_cast<T>(sum_gx[c]);
      beta_.grad[c] += static_cast<T>(sum_g[c]);
    }
    Tensor<T> gx(grad_out.shape());
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) {
      const T* g = grad_out.data() + i * channels_;
      const T* xh = xhat_.data() + i * channels_;
      T* out = gx.data() + i * channels_;
      for (std::size_t c = 0; c < channels_; ++c) {
        const double scale = static_cast<double>(gamma_.value[c]) * inv_std_[c];
        if (train_mode_) {
          out[c] = static_cast<T>(scale * (static_cast<double>(g[c]) - inv_m * sum_g[c] -
                                           static_cast<double>(xh[c]) * inv_m * sum_gx[c]));
        } else {
          out[c] = static_cast<T>(scale * static_cast<double>(g[c]));
        }
      }
    }
    return gx;
  }

  std::vector<Parameter<T>*> parameters() override { return {&gamma_, &beta_}; }
  std::vector<StateRef<T>> state() override {
    return {{this->name() + ".running_mean", &running_mean_}, {this->name() + ".running_var", &running_var_}};
  }
  bool ready_for_eval() const override { return stats_ready_; }
  void mark_ready_for_eval() override { stats_ready_ = true; }

  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }

 private:
  std::size_t channels_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  bool stats_ready_ = false;
  bool train_mode_ = false;
  std::vector<double> mean_, inv_std_;
  Tensor<T> xhat_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    Tensor<T> y = x;
    for (auto& v : y.values()) v = v > T{0} ? v : T{0};
    output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(!output_.empty());
    if (grad_out.shape() != output_.shape()) throw ShapeError(this->name() + ": grad_out shape mismatch");
    Tensor<T> gx(grad_out.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = output_[i] > T{0} ? grad_out[i] : T{0};
    return gx;
  }

 private:
  Tensor<T> output_;
};

// Non-overlapping average pooling; spatial extents must divide evenly.
template <typename T>
class AvgPool final : public Layer<T> {
 public:
  AvgPool(std::string name, std::size_t ph, std::size_t pw) : Layer<T>(std::move(name)), ph_(ph), pw_(pw) {
    if (ph == 0 || pw == 0) throw ShapeError(this->name() + ": pool extents must be >= 1");
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    if (x.rank() != 4) throw ShapeError(this->name() + ": expected rank-4 input");
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    if (h % ph_ != 0 || w % pw_ != 0) {
      throw ShapeError(this->name() + ": input " + shape_string(x.shape()) + " not divisible by pool " +
                       std::to_string(ph_) + "x" + std::to_string(pw_));
    }
    in_shape_ = x.shape();
    const std::size_t oh = h / ph_, ow = w / pw_;
    Tensor<T> y({n, oh, ow, c});
    const double inv_area = 1.0 / static_cast<double>(ph_ * pw_);
    std::vector<double> acc(c);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::fill(acc.begin(), acc.end(), 0.0);
          for (std::size_t dy = 0; dy < ph_; ++dy) {
            for (std::size_t dx = 0; dx < pw_; ++dx) {
              const T* in = x.data() + ((b * h + oy * ph_ + dy) * w + ox * pw_ + dx) * c;
              for (std::size_t k = 0; k < c; ++k) acc[k] += static_cast<double>(in[k]);
            }
          }
          T* out = y.data() + ((b * oh + oy) * ow + ox) * c;
          for (std::size_t k = 0; k < c; ++k) out[k] = static_cast<T>(acc[k] * inv_area);
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(!in_shape_.empty());
    const std::size_t n = in_shape_[0], h = in_shape_[1], w = in_shape_[2], c = in_shape_[3];
    const std::size_t oh = h / ph_, ow = w / pw_;
    if (grad_out.shape() != Shape{n, oh, ow, c}) throw ShapeError(this->name() + ": grad_out shape mismatch");
    Tensor<T> gx(in_shape_);
    const double inv_area = 1.0 / static_cast<double>(ph_ * pw_);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const T* g = grad_out.data() + ((b * oh + oy) * ow + ox) * c;
          for (std::size_t dy = 0; dy < ph_; ++dy) {
            for (std::size_t dx = 0; dx < pw_; ++dx) {
              T* out = gx.data() + ((b * h + oy * ph_ + dy) * w + ox * pw_ + dx) * c;
              for (std::size_t k = 0; k < c; ++k) out[k] = static_cast<T>(static_cast<double>(g[k]) * inv_area);
            }
          }
        }
      }
    }
    return gx;
  }

 private:
  std::size_t ph_, pw_;
  Shape in_shape_;
};

// N x H x W x C -> N x C.
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    if (x.rank() != 4) throw ShapeError(this->name() + ": expected rank-4 input");
    in_shape_ = x.shape();
    const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
    Tensor<T> y({n, c});
    std::vector<double> acc(c);
    for (std::size_t b = 0; b < n; ++b) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < hw; ++p) {
        const T* in = x.data() + (b * hw + p) * c;
        for (std::size_t k = 0; k < c; ++k) acc[k] += static_cast<double>(in[k]);
      }
      for (std::size_t k = 0; k < c; ++k) y[b * c + k] = static_cast<T>(acc[k] / static_cast<double>(hw));
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(!in_shape_.empty());
    const std::size_t n = in_shape_[0], hw = in_shape_[1] * in_shape_[2], c = in_shape_[3];
    if (grad_out.shape() != Shape{n, c}) throw ShapeError(this->name() + ": grad_out shape mismatch");
    Tensor<T> gx(in_shape_);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t p = 0; p < hw; ++p) {
        T* out = gx.data() + (b * hw + p) * c;
        for (std::size_t k = 0; k < c; ++k) {
          out[k] = static_cast<T>(static_cast<double>(grad_out[b * c + k]) / static_cast<double>(hw));
        }
      }
    }
    return gx;
  }

 private:
  Shape in_shape_;
};

// Inverted dropout: kept units are scaled by 1 / (1 - rate) at train time.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(std::string name, double rate) : Layer<T>(std::move(name)), rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ValidationError(this->name() + ": dropout rate must be in [0, 1)");
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override {
    active_ = ctx.mode == Mode::Train && rate_ > 0.0;
    if (!active_) return x;
    if (ctx.rng == nullptr) throw StateError(this->name() + ": train-mode dropout needs a random generator");
    const T scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_ = Tensor<T>(x.shape());
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask_[i] = ctx.rng->uniform() >= rate_ ? scale : T{0};
      y[i] = x[i] * mask_[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    if (!active_) return grad_out;
    if (grad_out.shape() != mask_.shape()) throw ShapeError(this->name() + ": grad_out shape mismatch");
    Tensor<T> gx(grad_out.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = grad_out[i] * mask_[i];
    return gx;
  }

  double rate() const { return rate_; }

 private:
  double rate_;
  bool active_ = false;
  Tensor<T> mask_;
};

// Fully connected layer; flattens all trailing input axes. Weights in x out.
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(std::string name, std::size_t in_features, std::size_t out_features)
      : Layer<T>(std::move(name)),
        in_(in_features),
        out_(out_features),
        weight_(this->name() + ".weight", {in_features, out_features}),
        bias_(this->name() + ".bias", {out_features}) {}

  void init(Rng& rng) {
    kaiming_uniform(weight_.value, in_, rng);
    bias_.value.fill(T{0});
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    if (x.rank() < 2 || row_size(x) != in_) {
      throw ShapeError(this->name() + ": expected " + std::to_string(in_) + " input features, got " +
                       shape_string(x.shape()));
    }
    input_ = x;
    const std::size_t n = x.dim(0);
    Tensor<T> y({n, out_});
    std::vector<double> acc(out_);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t o = 0; o < out_; ++o) acc[o] = static_cast<double>(bias_.value[o]);
      const T* in = x.data() + b * in_;
      for (std::size_t i = 0; i < in_; ++i) {
        const double v = static_cast<double>(in[i]);
        const T* wrow = weight_.value.data() + i * out_;
        for (std::size_t o = 0; o < out_; ++o) acc[o] += v * static_cast<double>(wrow[o]);
      }
      for (std::size_t o = 0; o < out_; ++o) y[b * out_ + o] = static_cast<T>(acc[o]);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(!input_.empty());
    const std::size_t n = input_.dim(0);
    if (grad_out.shape() != Shape{n, out_}) throw ShapeError(this->name() + ": grad_out shape mismatch");
    Tensor<T> gx(input_.shape());
    std::vector<double> gw(in_ * out_, 0.0);
    std::vector<double> gb(out_, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
      const T* g = grad_out.data() + b * out_;
      const T* in = input_.data() + b * in_;
      for (std::size_t o = 0; o < out_; ++o) gb[o] += static_cast<double>(g[o]);
      for (std::size_t i = 0; i < in_; ++i) {
        const T* wrow = weight_.value.data() + i * out_;
        double* gwrow = gw.data() + i * out_;
        const double v = static_cast<double>(in[i]);
        double s = 0.0;
        for (std::size_t o = 0; o < out_; ++o) {
          const double go = static_cast<double>(g[o]);
          s += static_cast<double>(wrow[o]) * go;
          gwrow[o] += v * go;
        }
        gx[b * in_ + i] = static_cast<T>(s);
      }
    }
    for (std::size_t i = 0; i < gw.size(); ++i) weight_.grad[i] += static_cast<T>(gw[i]);
    for (std::size_t o = 0; o < out_; ++o) bias_.grad[o] += static_cast<T>(gb[o]);
    return gx;
  }

  std::vector<Parameter<T>*> parameters() override { return {&weight_, &bias_}; }

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
};

// Row-wise softmax over the last axis of an N x C tensor.
template <typename T>
class Softmax final : public Layer<T> {
 public:
  using Layer<T>::Layer;

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext&) override {
    if (x.rank() != 2) throw ShapeError(this->name() + ": expected N x C input");
    const std::size_t n = x.dim(0), c = x.dim(1);
    Tensor<T> y(x.shape());
    std::vector<double> e(c);
    for (std::size_t b = 0; b < n; ++b) {
      const T* in = x.data() + b * c;
      double mx = static_cast<double>(in[0]);
      for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, static_cast<double>(in[k]));
      double sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        e[k] = std::exp(static_cast<double>(in[k]) - mx);
        sum += e[k];
      }
      for (std::size_t k = 0; k < c; ++k) y[b * c + k] = static_cast<T>(e[k] / sum);
    }
    output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    this->require_cache(!output_.empty());
    if (grad_out.shape() != output_.shape()) throw ShapeError(this->name() + ": grad_out shape mismatch");
    const std::size_t n = output_.dim(0), c = output_.dim(1);
    Tensor<T> gx(output_.shape());
    for (std::size_t b = 0; b < n; ++b) {
      double dot = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        dot += static_cast<double>(grad_out[b * c + k]) * static_cast<double>(output_[b * c + k]);
      }
      for (std::size_t k = 0; k < c; ++k) {
        const double yk = static_cast<double>(output_[b * c + k]);
        gx[b * c + k] = static_cast<T>(yk * (static_cast<double>(grad_out[b * c + k]) - dot));
      }
    }
    return gx;
  }

 private:
  Tensor<T> output_;
};

// Residual stage of the teacher backbone:
//   out = ReLU(BN(Conv(BN(ReLU(Conv(x))))) + shortcut(x))
// where shortcut is identity when channel counts match and a 1x1 conv otherwise.
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel)
      : Layer<T>(std::move(name)),
        conv1_(this->name() + ".conv1", in_channels, out_channels, kernel, kernel),
        relu1_(this->name() + ".relu1"),
        bn1_(this->name() + ".bn1", out_channels),
        conv2_(this->name() + ".conv2", out_channels, out_channels, kernel, kernel),
        bn2_(this->name() + ".bn2", out_channels),
        relu_out_(this->name() + ".relu_out") {
    if (in_channels != out_channels) {
      projection_ = std::make_unique<Conv2D<T>>(this->name() + ".proj", in_channels, out_channels, 1, 1);
    }
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    if (projection_) projection_->init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, const ForwardContext& ctx) override {
    Tensor<T> h = bn1_.forward(relu1_.forward(conv1_.forward(x, ctx), ctx), ctx);
    h = bn2_.forward(conv2_.forward(h, ctx), ctx);
    const Tensor<T> s = projection_ ? projection_->forward(x, ctx) : x;
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += s[i];
    return relu_out_.forward(h, ctx);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) override {
    const Tensor<T> g = relu_out_.backward(grad_out);
    Tensor<T> gx = conv1_.backward(relu1_.backward(bn1_.backward(conv2_.backward(bn2_.backward(g)))));
    const Tensor<T> gs = projection_ ? projection_->backward(g) : g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gs[i];
    return gx;
  }

  std::vector<Parameter<T>*> parameters() override {
    std::vector<Parameter<T>*> out;
    for (Layer<T>* l : sublayers()) {
      for (auto* p : l->parameters()) out.push_back(p);
    }
    return out;
  }

  std::vector<StateRef<T>> state() override {
    std::vector<StateRef<T>> out;
    for (Layer<T>* l : sublayers()) {
      for (auto s : l->state()) out.push_back(s);
    }
    return out;
  }

  bool ready_for_eval() const override { return bn1_.ready_for_eval() && bn2_.ready_for_eval(); }
  void mark_ready_for_eval() override {
    bn1_.mark_ready_for_eval();
    bn2_.mark_ready_for_eval();
  }

 private:
  std::vector<Layer<T>*> sublayers() {
    std::vector<Layer<T>*> out{&conv1_, &bn1_, &conv2_, &bn2_};
    if (projection_) out.push_back(projection_.get());
    return out;
  }

  Conv2D<T> conv1_;
  ReLU<T> relu1_;
  BatchNorm<T> bn1_;
  Conv2D<T> conv2_;
  BatchNorm<T> bn2_;
  std::unique_ptr<Conv2D<T>> projection_;
  ReLU<T> relu_out_;
};

}  // namespace kdasc::nn
