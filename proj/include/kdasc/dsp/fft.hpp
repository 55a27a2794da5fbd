#pragma once

#include <complex>
#include <span>
#include <vector>

namespace kdasc {

// Radix-2 decimation-in-time FFT for a fixed power-of-two size.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);

  std::size_t size() const { return n_; }

  // In-place forward transform (no scaling), e^{-2 pi i k n / N} kernel.
  void forward(std::span<std::complex<double>> data) const;

  // Forward transform of a real frame; returns the n/2 + 1 non-negative bins.
  std::vector<std::complex<double>> forward_real(std::span<const double> frame) const;

 private:
  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddles_;
};

}  // namespace kdasc
