#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "kdasc/audio.hpp"
#include "kdasc/manifest.hpp"

namespace kdasc {

// Per-class recipe for the synthetic scene corpus: band-passed coloured
// noise with amplitude modulation plus an optional steady tone.
struct SynthClassParams {
  double band_center_hz;
  double band_q;
  double am_rate_hz;    // 0 disables modulation
  double tone_hz;       // 0 disables the tonal component
  double noise_colour;  // one-pole low-pass coefficient applied to white noise, in [0, 1)
};

const std::array<SynthClassParams, kNumClasses>& synth_class_params();

// One second of class `class_index` audio; fully determined by clip_seed.
AudioClip synthesize_clip(std::size_t class_index, std::uint64_t clip_seed, int sample_rate = 44100);

// Writes <out_dir>/audio/<label>_<nnn>.wav (16-bit PCM) and
// <out_dir>/manifest.tsv. Each class contributes per_class clips; of those,
// round(0.2 * per_class) go to EVAL, picked by a seeded shuffle.
DatasetManifest generate_synthetic_dataset(const std::filesystem::path& out_dir, std::uint64_t seed,
                                           std::size_t per_class, int sample_rate = 44100);

inline constexpr double kEvalFraction = 0.2;

}  // namespace kdasc
