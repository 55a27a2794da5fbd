#pragma once

#include <filesystem>
#include <vector>

namespace kdasc {

// Mono audio with samples in [-1, 1].
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 44100;

  double duration() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

enum class WavEncoding { Pcm16, Pcm32, Float32 };

// Reads PCM16/PCM32/IEEE-float32 RIFF files (WAVE_FORMAT_EXTENSIBLE included).
// Integer PCM is scaled by 1/2^(bits-1), so 16-bit data maps onto [-1, 1).
// Multichannel input is averaged to mono. Float data is clamped to [-1, 1].
AudioClip load_wav(const std::filesystem::path& path);

// Writes interleaved `channels` copies of the clip; mostly useful for tests
// and the synthetic corpus. Pcm16 rounds to nearest and saturates.
void save_wav(const std::filesystem::path& path, const AudioClip& clip,
              WavEncoding encoding = WavEncoding::Pcm16);

// Writes raw interleaved multichannel data (channel-major per frame).
void save_wav_interleaved(const std::filesystem::path& path, const std::vector<float>& interleaved,
                          int channels, int sample_rate, WavEncoding encoding);

// Non-overlapping consecutive cuts of `segment_seconds`; the last partial
// segment is zero-padded to full length.
std::vector<AudioClip> segment_clip(const AudioClip& clip, double segment_seconds);

}  // namespace kdasc
