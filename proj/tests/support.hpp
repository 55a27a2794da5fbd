#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "kdasc/nn/layers.hpp"
#include "kdasc/nn/tensor.hpp"
#include "kdasc/rng.hpp"

namespace kdasc::test {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "kdasc") {
    Rng rng(static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)) ^
            static_cast<std::uint64_t>(std::hash<std::string>{}(tag)));
    for (;;) {
      path_ = std::filesystem::temp_directory_path() / (tag + "_" + std::to_string(rng.next_u64() % 1000000007ULL));
      if (std::filesystem::create_directories(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

template <typename T>
nn::Tensor<T> random_tensor(const nn::Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Gradient checking by central differences.
//   relative error = |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)
inline constexpr double kGradStep = 1e-3;
inline constexpr double kGradTolerance = 1e-4;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct GradCheckResult {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  std::string worst;  // name and index of the worst coordinate
};

struct Coordinate {
  std::string name;
  nn::Tensor<double>* tensor;
  std::size_t index;
  double analytic;
};

// Up to `samples` coordinates per tensor, drawn without replacement.
inline std::vector<std::size_t> sample_indices(std::size_t size, std::size_t samples, Rng& rng) {
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  if (size > samples) {
    rng.shuffle(idx);
    idx.resize(samples);
  }
  return idx;
}

// Compares analytic gradients against central differences of `loss`.
// With `piecewise_linear` set, coordinates whose one-sided differences
// disagree (a ReLU kink inside the step) are skipped and counted.
inline GradCheckResult check_coordinates(const std::vector<Coordinate>& coords, const std::function<double()>& loss,
                                         bool piecewise_linear, double step = kGradStep,
                                         double kink_rel = 1e-3) {
  GradCheckResult r;
  const double base = piecewise_linear ? loss() : 0.0;
  for (const auto& c : coords) {
    double& v = (*c.tensor)[c.index];
    const double saved = v;
    v = saved + step;
    const double lp = loss();
    v = saved - step;
    const double lm = loss();
    v = saved;
    if (piecewise_linear) {
      const double fwd = (lp - base) / step;
      const double bwd = (base - lm) / step;
      if (std::abs(fwd - bwd) > kink_rel * std::max({std::abs(fwd), std::abs(bwd), 1e-3})) {
        ++r.skipped_kinks;
        continue;
      }
    }
    const double numeric = (lp - lm) / (2.0 * step);
    const double rel = relative_error(c.analytic, numeric);
    ++r.checked;
    if (rel > r.max_rel) {
      r.max_rel = rel;
      r.worst = c.name + "[" + std::to_string(c.index) + "] analytic=" + std::to_string(c.analytic) +
                " numeric=" + std::to_string(numeric);
    }
  }
  return r;
}

// Checks d(sum(r * layer(x)))/d{x, params} for one layer.
inline GradCheckResult check_layer(nn::Layer<double>& layer, nn::Tensor<double> x, nn::Mode mode, std::uint64_t seed,
                                   bool piecewise_linear = false, std::size_t samples = 100) {
  auto forward = [&](const nn::Tensor<double>& in) {
    Rng mask_rng(mix_seed(seed, 7));
    const nn::ForwardContext ctx{mode, &mask_rng};
    return layer.forward(in, ctx);
  };
  Rng rng(seed);
  const nn::Tensor<double> y0 = forward(x);
  const nn::Tensor<double> proj = random_tensor<double>(y0.shape(), rng);
  auto loss = [&]() {
    const auto y = forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += proj[i] * y[i];
    return s;
  };

  for (auto* p : layer.parameters()) p->grad.fill(0.0);
  forward(x);
  const nn::Tensor<double> gx = layer.backward(proj);

  std::vector<Coordinate> coords;
  for (auto i : sample_indices(x.size(), samples, rng)) coords.push_back({"input", &x, i, gx[i]});
  for (auto* p : layer.parameters()) {
    for (auto i : sample_indices(p->value.size(), samples, rng)) {
      coords.push_back({p->name, &p->value, i, p->grad[i]});
    }
  }
  return check_coordinates(coords, loss, piecewise_linear);
}

// Independent reference convolution: same padding (pad_before = (k-1)/2), stride 1.
inline std::vector<double> naive_conv(const std::vector<double>& x, std::size_t n, std::size_t h, std::size_t w,
                                      std::size_t cin, const std::vector<double>& k, std::size_t kh, std::size_t kw,
                                      std::size_t cout, const std::vector<double>& bias) {
  std::vector<double> y(n * h * w * cout, 0.0);
  const long pt = static_cast<long>((kh - 1) / 2), pl = static_cast<long>((kw - 1) / 2);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < h; ++oy)
      for (std::size_t ox = 0; ox < w; ++ox)
        for (std::size_t co = 0; co < cout; ++co) {
          double s = bias[co];
          for (std::size_t dy = 0; dy < kh; ++dy)
            for (std::size_t dx = 0; dx < kw; ++dx)
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const long iy = static_cast<long>(oy + dy) - pt;
                const long ix = static_cast<long>(ox + dx) - pl;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                s += x[((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * cin + ci] *
                     k[((dy * kw + dx) * cin + ci) * cout + co];
              }
          y[((b * h + oy) * w + ox) * cout + co] = s;
        }
  return y;
}

}  // namespace kdasc::test
