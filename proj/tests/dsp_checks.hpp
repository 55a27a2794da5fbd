#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "kdasc/dsp/features.hpp"
#include "kdasc/dsp/fft.hpp"
#include "kdasc/dsp/filterbank.hpp"
#include "kdasc/dsp/stft.hpp"

namespace kdasc::test {

// Filter outputs for one Hann-windowed frame of a unit sine at `hz`.
inline std::vector<double> tone_response(const FilterBank& bank, const SpectrogramConfig& cfg, double hz) {
  const FftPlan plan(cfg.n_fft);
  const auto window = padded_hann(cfg);
  std::vector<double> frame(cfg.n_fft);
  for (std::size_t i = 0; i < cfg.n_fft; ++i) {
    frame[i] = window[i] * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / cfg.sample_rate);
  }
  const auto spec = plan.forward_real(frame);
  Matrix power(spec.size(), 1);
  for (std::size_t b = 0; b < spec.size(); ++b) power(b, 0) = std::norm(spec[b]);
  const Matrix out = apply_filterbank_linear(power, bank);
  return out.data;
}

struct ToneLocalization {
  std::size_t tested = 0;
  std::vector<std::size_t> failures;  // filter indices whose tone peaked elsewhere
};

// A tone at each interior filter's center must make that filter the argmax.
// Only filters at least one FFT bin away from both neighbours are
// resolvable by the STFT and therefore tested.
inline ToneLocalization check_tone_localization(SpectrogramKind kind) {
  const auto cfg = SpectrogramConfig::defaults(kind);
  const auto bank = build_filterbank(cfg);
  const double df = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.n_fft);
  const auto& c = bank.center_frequencies;
  ToneLocalization r;
  for (std::size_t k = 1; k + 1 < bank.n_filters(); ++k) {
    if (c[k] - c[k - 1] < df || c[k + 1] - c[k] < df) continue;
    const auto out = tone_response(bank, cfg, c[k]);
    std::size_t arg = 0;
    for (std::size_t f = 1; f < out.size(); ++f) {
      if (out[f] > out[arg]) arg = f;
    }
    ++r.tested;
    if (arg != k) r.failures.push_back(k);
  }
  return r;
}

struct DeltaCheck {
  bool ramp_delta_exact = true;
  bool ramp_delta_delta_zero = true;
  bool constant_all_zero = true;
};

// Every one of the 128 rows carries its own ramp slope / constant level.
// Interior output frames: delta needs 4 real neighbours on each side of the
// uncropped index, delta-delta needs 8.
inline DeltaCheck check_delta_closed_forms() {
  DeltaCheck r;
  Matrix ramp(kFeatureBands, 132), constant(kFeatureBands, 132);
  for (std::size_t b = 0; b < kFeatureBands; ++b) {
    const double slope = 0.25 * static_cast<double>(b) - 16.0;
    for (std::size_t t = 0; t < 132; ++t) {
      ramp(b, t) = slope * static_cast<double>(t) + 3.0;
      constant(b, t) = -7.5 + 0.125 * static_cast<double>(b);
    }
  }
  const auto tr = add_deltas(ramp, SpectrogramKind::Mel);
  const auto tc = add_deltas(constant, SpectrogramKind::Mel);
  const std::size_t lead = 2;
  for (std::size_t b = 0; b < kFeatureBands; ++b) {
    const float slope = static_cast<float>(0.25 * static_cast<double>(b) - 16.0);
    for (std::size_t t = 0; t < kFeatureFrames; ++t) {
      const std::size_t src = t + lead;
      if (src >= 4 && src + 4 < 132 && tr.at(b, t, 1) != slope) r.ramp_delta_exact = false;
      if (src >= 8 && src + 8 < 132 && tr.at(b, t, 2) != 0.0f) r.ramp_delta_delta_zero = false;
      if (tc.at(b, t, 1) != 0.0f || tc.at(b, t, 2) != 0.0f) r.constant_all_zero = false;
    }
  }
  return r;
}

}  // namespace kdasc::test
