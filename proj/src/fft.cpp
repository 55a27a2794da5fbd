#include "kdasc/dsp/fft.hpp"

#include <cmath>
#include <numbers>

#include "kdasc/error.hpp"

namespace kdasc {

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n < 2 || (n & (n - 1)) != 0) throw ConfigError("FFT size must be a power of two >= 2");
  std::size_t log2n = 0;
  while ((std::size_t{1} << log2n) < n) ++log2n;
  bitrev_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < log2n; ++b) {
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (log2n - 1 - b);
    }
    bitrev_[i] = r;
  }
  twiddles_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddles_[k] = {std::cos(angle), std::sin(angle)};
  }
}

void FftPlan::forward(std::span<std::complex<double>> data) const {
  if (data.size() != n_) throw ShapeError("FFT input length does not match plan size");
  for (std::size_t i = 0; i < n_; ++i) {
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const auto w = twiddles_[j * stride];
        const auto u = data[start + j];
        const auto v = data[start + j + half] * w;
        data[start + j] = u + v;
        data[start + j + half] = u - v;
      }
    }
  }
}

std::vector<std::complex<double>> FftPlan::forward_real(std::span<const double> frame) const {
  if (frame.size() != n_) throw ShapeError("FFT input length does not match plan size");
  std::vector<std::complex<double>> buf(frame.begin(), frame.end());
  forward(buf);
  buf.resize(n_ / 2 + 1);
  return buf;
}

}  // namespace kdasc
