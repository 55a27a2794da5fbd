#include "kdasc/dsp/stft.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "kdasc/dsp/fft.hpp"
#include "kdasc/error.hpp"

namespace kdasc {

std::string_view to_string(SpectrogramKind k) {
  switch (k) {
    case SpectrogramKind::Mel:
      return "MEL";
    case SpectrogramKind::Gam:
      return "GAM";
    case SpectrogramKind::Cqt:
      return "CQT";
  }
  return "?";
}

std::optional<SpectrogramKind> parse_kind(std::string_view s) {
  for (auto k : kAllKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

SpectrogramConfig SpectrogramConfig::defaults(SpectrogramKind kind) {
  SpectrogramConfig c;
  c.kind = kind;
  switch (kind) {
    case SpectrogramKind::Mel:
      c.fmin = 0.0;
      break;
    case SpectrogramKind::Gam:
      c.fmin = 50.0;
      break;
    case SpectrogramKind::Cqt:
      c.fmin = 32.7;
      break;
  }
  c.fmax = 22050.0;
  return c;
}

void SpectrogramConfig::validate() const {
  if (window_length == 0 || window_length > n_fft) throw ConfigError("window_length must be in [1, n_fft]");
  if (hop_length < 1) throw ConfigError("hop_length must be >= 1");
  if (n_filters < 1) throw ConfigError("n_filters must be >= 1");
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw ConfigError("require 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (frames < 1) throw ConfigError("frames must be >= 1");
  if (bins_per_octave < 1) throw ConfigError("bins_per_octave must be >= 1");
}

std::vector<double> padded_hann(const SpectrogramConfig& config) {
  std::vector<double> w(config.n_fft, 0.0);
  const std::size_t offset = (config.n_fft - config.window_length) / 2;
  const double n = static_cast<double>(config.window_length);
  for (std::size_t i = 0; i < config.window_length; ++i) {
    w[offset + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
  }
  return w;
}

namespace {

void check_clip(const AudioClip& clip, const SpectrogramConfig& config) {
  config.validate();
  if (clip.sample_rate != config.sample_rate) {
    throw ConfigError("clip sample rate " + std::to_string(clip.sample_rate) + " Hz, front-end expects " +
                      std::to_string(config.sample_rate) + " Hz");
  }
  if (clip.samples.size() <= config.n_fft / 2) {
    throw ShapeError("clip too short for reflect padding of n_fft/2 samples");
  }
}

// numpy-style 'reflect' (edge sample not repeated).
double reflect_at(const std::vector<float>& x, std::ptrdiff_t i) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if (i < 0) i = -i;
  if (i >= n) i = 2 * (n - 1) - i;
  return x[static_cast<std::size_t>(i)];
}

std::size_t full_frame_count(const AudioClip& clip, const SpectrogramConfig& config) {
  return 1 + clip.samples.size() / config.hop_length;
}

}  // namespace

std::vector<double> windowed_frame(const AudioClip& clip, const SpectrogramConfig& config, std::size_t t) {
  check_clip(clip, config);
  const auto window = padded_hann(config);
  const auto half = static_cast<std::ptrdiff_t>(config.n_fft / 2);
  const auto start = static_cast<std::ptrdiff_t>(t * config.hop_length) - half;
  std::vector<double> frame(config.n_fft);
  for (std::size_t i = 0; i < config.n_fft; ++i) {
    frame[i] = window[i] == 0.0 ? 0.0 : window[i] * reflect_at(clip.samples, start + static_cast<std::ptrdiff_t>(i));
  }
  return frame;
}

Matrix stft_power_full(const AudioClip& clip, const SpectrogramConfig& config) {
  check_clip(clip, config);
  const std::size_t frames = full_frame_count(clip, config);
  const std::size_t bins = config.n_fft / 2 + 1;
  const FftPlan plan(config.n_fft);
  const auto window = padded_hann(config);
  const auto half = static_cast<std::ptrdiff_t>(config.n_fft / 2);

  Matrix power(bins, frames);
  std::vector<std::complex<double>> buf(config.n_fft);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * config.hop_length) - half;
    for (std::size_t i = 0; i < config.n_fft; ++i) {
      const double w = window[i];
      buf[i] = w == 0.0 ? 0.0 : w * reflect_at(clip.samples, start + static_cast<std::ptrdiff_t>(i));
    }
    plan.forward(buf);
    for (std::size_t k = 0; k < bins; ++k) power(k, t) = std::norm(buf[k]);
  }
  return power;
}

Matrix stft_power(const AudioClip& clip, const SpectrogramConfig& config) {
  const Matrix full = stft_power_full(clip, config);
  if (full.cols < config.frames) {
    throw ShapeError("clip yields " + std::to_string(full.cols) + " frames, need at least " +
                     std::to_string(config.frames));
  }
  const std::size_t lead = (full.cols - config.frames) / 2;
  Matrix out(full.rows, config.frames);
  for (std::size_t k = 0; k < full.rows; ++k) {
    for (std::size_t t = 0; t < config.frames; ++t) out(k, t) = full(k, t + lead);
  }
  return out;
}

double one_sided_energy(std::span<const double> power_column, std::size_t n_fft) {
  const std::size_t bins = n_fft / 2 + 1;
  if (power_column.size() != bins) throw ShapeError("power column length must be n_fft/2 + 1");
  double sum = power_column[0] + power_column[bins - 1];
  for (std::size_t k = 1; k + 1 < bins; ++k) sum += 2.0 * power_column[k];
  return sum / static_cast<double>(n_fft);
}

}  // namespace kdasc
