#pragma once

#include <span>
#include <string_view>
#include <optional>
#include <vector>

#include "kdasc/audio.hpp"
#include "kdasc/dsp/matrix.hpp"

namespace kdasc {

enum class SpectrogramKind { Mel, Gam, Cqt };

inline constexpr SpectrogramKind kAllKinds[] = {SpectrogramKind::Mel, SpectrogramKind::Gam, SpectrogramKind::Cqt};

std::string_view to_string(SpectrogramKind k);
std::optional<SpectrogramKind> parse_kind(std::string_view s);

struct SpectrogramConfig {
  SpectrogramKind kind = SpectrogramKind::Mel;
  std::size_t n_fft = 4096;
  std::size_t window_length = 2048;
  std::size_t hop_length = 326;
  std::size_t n_filters = 128;
  double fmin = 0.0;
  double fmax = 22050.0;
  int sample_rate = 44100;
  // Frames kept after center-cropping the padded STFT.
  std::size_t frames = 132;
  // Constant-Q resolution; only read for the CQT kind.
  int bins_per_octave = 16;

  // Front-end defaults per kind: MEL 0..22050 Hz, GAM 50..22050 Hz,
  // CQT from 32.7 Hz (C1) with 16 bins per octave.
  static SpectrogramConfig defaults(SpectrogramKind kind);

  void validate() const;
};

// Periodic Hann window of window_length samples, centered in an n_fft frame.
std::vector<double> padded_hann(const SpectrogramConfig& config);

// Full power STFT, (n_fft/2 + 1) x (1 + len/hop) frames. Reflect padding of
// n_fft/2 on both sides puts frame t's center on sample t * hop.
Matrix stft_power_full(const AudioClip& clip, const SpectrogramConfig& config);

// stft_power_full cropped to the central `config.frames` frames.
Matrix stft_power(const AudioClip& clip, const SpectrogramConfig& config);

// The windowed n_fft-sample frame t of the padded signal (frame t of the full STFT).
std::vector<double> windowed_frame(const AudioClip& clip, const SpectrogramConfig& config, std::size_t t);

// Time-domain energy implied by one power column under the one-sided
// convention: (P[0] + P[N/2] + 2 * sum of the rest) / N.
double one_sided_energy(std::span<const double> power_column, std::size_t n_fft);

}  // namespace kdasc
