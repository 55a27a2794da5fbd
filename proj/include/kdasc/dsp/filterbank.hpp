#pragma once

#include <utility>
#include <vector>

#include "kdasc/dsp/matrix.hpp"
#include "kdasc/dsp/stft.hpp"

namespace kdasc {

// n_filters x (n_fft/2 + 1) nonnegative weights plus per-filter metadata.
struct FilterBank {
  SpectrogramKind kind = SpectrogramKind::Mel;
  Matrix weights;
  std::vector<double> center_frequencies;  // strictly increasing, Hz
  std::vector<double> bandwidths;          // Hz; meaning depends on kind
  // Half-open [first, last) range of nonzero bins per row.
  std::vector<std::pair<std::size_t, std::size_t>> support;

  std::size_t n_filters() const { return weights.rows; }
  std::size_t n_bins() const { return weights.cols; }
};

inline constexpr double kLogEpsilon = 1e-10;

double hz_to_mel(double hz);
double mel_to_hz(double mel);
double erb_number(double hz);
double erb_number_to_hz(double erb);
// Equivalent rectangular bandwidth at hz (Glasberg & Moore).
double erb_bandwidth(double hz);
// Magnitude of a 4th-order gammatone filter centred at `center`, evaluated at f.
double gammatone_magnitude(double f, double center);

// Triangular filters on the HTK mel scale, area-normalized (2 / (f_hi - f_lo)).
FilterBank build_mel_filterbank(const SpectrogramConfig& config);
// 4th-order gammatone magnitude responses on ERB-spaced centers, peak-normalized.
FilterBank build_gammatone_filterbank(const SpectrogramConfig& config);
// Pseudo constant-Q: geometric centers from fmin, triangular kernels of half-width
// max(center/Q, bin spacing), L1-normalized rows.
FilterBank build_cqt_filterbank(const SpectrogramConfig& config);
FilterBank build_filterbank(const SpectrogramConfig& config);

// Q of a constant-Q bank with the given resolution: 1 / (2^(1/B) - 1).
double constant_q(int bins_per_octave);

// bank.weights * power, no compression.
Matrix apply_filterbank_linear(const Matrix& power, const FilterBank& bank);
// log(bank.weights * power + 1e-10).
Matrix apply_filterbank(const Matrix& power, const FilterBank& bank);

}  // namespace kdasc
