#include "kdasc/dsp/filterbank.hpp"

#include <cmath>
#include <string>

#include "kdasc/error.hpp"

namespace kdasc {
namespace {

constexpr double kGammatoneB = 1.019;

double bin_hz(const SpectrogramConfig& c) {
  return static_cast<double>(c.sample_rate) / static_cast<double>(c.n_fft);
}

void require_kind(const SpectrogramConfig& c, SpectrogramKind k) {
  c.validate();
  if (c.kind != k) {
    throw ConfigError("filterbank builder for " + std::string(to_string(k)) + " called with kind " +
                      std::string(to_string(c.kind)));
  }
}

// Fills `support` and rejects empty rows.
void finalize(FilterBank& bank) {
  bank.support.assign(bank.n_filters(), {0, 0});
  for (std::size_t f = 0; f < bank.n_filters(); ++f) {
    std::size_t first = bank.n_bins();
    std::size_t last = 0;
    for (std::size_t b = 0; b < bank.n_bins(); ++b) {
      if (bank.weights(f, b) > 0.0) {
        first = std::min(first, b);
        last = b + 1;
      }
    }
    if (last == 0) {
      throw ConstructionError(std::string(to_string(bank.kind)) + " filter " + std::to_string(f) + " (center " +
                              std::to_string(bank.center_frequencies[f]) +
                              " Hz) covers no FFT bin; too many filters for this resolution");
    }
    bank.support[f] = {first, last};
  }
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }
double erb_number(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }
double erb_number_to_hz(double erb) { return (std::pow(10.0, erb / 21.4) - 1.0) / 0.00437; }
double erb_bandwidth(double hz) { return 24.7 * (4.37 * hz / 1000.0 + 1.0); }

double gammatone_magnitude(double f, double center) {
  const double x = (f - center) / (kGammatoneB * erb_bandwidth(center));
  const double base = 1.0 + x * x;
  return 1.0 / (base * base);
}

double constant_q(int bins_per_octave) { return 1.0 / (std::exp2(1.0 / bins_per_octave) - 1.0); }

FilterBank build_mel_filterbank(const SpectrogramConfig& config) {
  require_kind(config, SpectrogramKind::Mel);
  const std::size_t n = config.n_filters;
  const std::size_t bins = config.n_fft / 2 + 1;
  const double lo_mel = hz_to_mel(config.fmin);
  const double hi_mel = hz_to_mel(config.fmax);
  std::vector<double> edges(n + 2);
  for (std::size_t i = 0; i < n + 2; ++i) {
    edges[i] = mel_to_hz(lo_mel + (hi_mel - lo_mel) * static_cast<double>(i) / static_cast<double>(n + 1));
  }
  edges.front() = config.fmin;
  edges.back() = config.fmax;

  FilterBank bank;
  bank.kind = SpectrogramKind::Mel;
  bank.weights = Matrix(n, bins);
  const double df = bin_hz(config);
  for (std::size_t f = 0; f < n; ++f) {
    const double lo = edges[f];
    const double mid = edges[f + 1];
    const double hi = edges[f + 2];
    const double norm = 2.0 / (hi - lo);
    for (std::size_t b = 0; b < bins; ++b) {
      const double fb = static_cast<double>(b) * df;
      const double rise = (fb - lo) / (mid - lo);
      const double fall = (hi - fb) / (hi - mid);
      const double w = std::min(rise, fall);
      if (w > 0.0) bank.weights(f, b) = w * norm;
    }
    bank.center_frequencies.push_back(mid);
    bank.bandwidths.push_back(hi - lo);
  }
  finalize(bank);
  return bank;
}

FilterBank build_gammatone_filterbank(const SpectrogramConfig& config) {
  require_kind(config, SpectrogramKind::Gam);
  const std::size_t n = config.n_filters;
  const std::size_t bins = config.n_fft / 2 + 1;
  const double lo = erb_number(config.fmin);
  const double hi = erb_number(config.fmax);

  FilterBank bank;
  bank.kind = SpectrogramKind::Gam;
  bank.weights = Matrix(n, bins);
  const double df = bin_hz(config);
  for (std::size_t f = 0; f < n; ++f) {
    const double t = n == 1 ? 0.0 : static_cast<double>(f) / static_cast<double>(n - 1);
    double center = erb_number_to_hz(lo + (hi - lo) * t);
    if (f == 0) center = config.fmin;
    if (f + 1 == n && n > 1) center = config.fmax;
    double peak = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
      const double w = gammatone_magnitude(static_cast<double>(b) * df, center);
      bank.weights(f, b) = w;
      peak = std::max(peak, w);
    }
    for (std::size_t b = 0; b < bins; ++b) bank.weights(f, b) /= peak;
    bank.center_frequencies.push_back(center);
    bank.bandwidths.push_back(kGammatoneB * erb_bandwidth(center));
  }
  finalize(bank);
  return bank;
}

FilterBank build_cqt_filterbank(const SpectrogramConfig& config) {
  require_kind(config, SpectrogramKind::Cqt);
  const std::size_t n = config.n_filters;
  const std::size_t bins = config.n_fft / 2 + 1;
  const double q = constant_q(config.bins_per_octave);
  const double df = bin_hz(config);
  const double top = config.fmin * std::exp2(static_cast<double>(n - 1) / config.bins_per_octave);
  if (top > config.fmax) {
    throw ConstructionError("top CQT center " + std::to_string(top) + " Hz exceeds fmax " +
                            std::to_string(config.fmax) + " Hz");
  }

  FilterBank bank;
  bank.kind = SpectrogramKind::Cqt;
  bank.weights = Matrix(n, bins);
  for (std::size_t f = 0; f < n; ++f) {
    const double center = config.fmin * std::exp2(static_cast<double>(f) / config.bins_per_octave);
    const double bandwidth = center / q;
    const double half_width = std::max(bandwidth, df);
    double sum = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
      const double w = 1.0 - std::abs(static_cast<double>(b) * df - center) / half_width;
      if (w > 0.0) {
        bank.weights(f, b) = w;
        sum += w;
      }
    }
    if (sum > 0.0) {
      for (std::size_t b = 0; b < bins; ++b) bank.weights(f, b) /= sum;
    }
    bank.center_frequencies.push_back(center);
    bank.bandwidths.push_back(bandwidth);
  }
  finalize(bank);
  return bank;
}

FilterBank build_filterbank(const SpectrogramConfig& config) {
  switch (config.kind) {
    case SpectrogramKind::Mel:
      return build_mel_filterbank(config);
    case SpectrogramKind::Gam:
      return build_gammatone_filterbank(config);
    case SpectrogramKind::Cqt:
      return build_cqt_filterbank(config);
  }
  throw ConfigError("unknown spectrogram kind");
}

Matrix apply_filterbank_linear(const Matrix& power, const FilterBank& bank) {
  if (power.rows != bank.n_bins()) {
    throw ShapeError("filterbank expects " + std::to_string(bank.n_bins()) + " bins, spectrogram has " +
                     std::to_string(power.rows));
  }
  Matrix out(bank.n_filters(), power.cols);
  for (std::size_t f = 0; f < bank.n_filters(); ++f) {
    double* row = &out.data[f * out.cols];
    const auto [first, last] = bank.support.empty() ? std::pair<std::size_t, std::size_t>{0, bank.n_bins()}
                                                    : bank.support[f];
    for (std::size_t b = first; b < last; ++b) {
      const double w = bank.weights(f, b);
      if (w == 0.0) continue;
      const double* src = &power.data[b * power.cols];
      for (std::size_t t = 0; t < power.cols; ++t) row[t] += w * src[t];
    }
  }
  return out;
}

Matrix apply_filterbank(const Matrix& power, const FilterBank& bank) {
  Matrix out = apply_filterbank_linear(power, bank);
  for (auto& v : out.data) v = std::log(v + kLogEpsilon);
  return out;
}

}  // namespace kdasc
