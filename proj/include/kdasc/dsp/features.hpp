#pragma once

#include <array>
#include <optional>
#include <vector>

#include "kdasc/audio.hpp"
#include "kdasc/dsp/filterbank.hpp"
#include "kdasc/dsp/matrix.hpp"
#include "kdasc/dsp/stft.hpp"

namespace kdasc {

inline constexpr std::size_t kFeatureBands = 128;
inline constexpr std::size_t kFeatureFrames = 128;
inline constexpr std::size_t kFeatureChannels = 3;
inline constexpr std::size_t kFeatureSize = kFeatureBands * kFeatureFrames * kFeatureChannels;
inline constexpr std::size_t kDeltaHalfWidth = 4;

// 128 (frequency) x 128 (time) x 3 (static, delta, delta-delta), stored
// frequency-major then time then channel.
struct FeatureTensor {
  SpectrogramKind kind = SpectrogramKind::Mel;
  std::vector<float> values = std::vector<float>(kFeatureSize, 0.0f);

  float& at(std::size_t band, std::size_t frame, std::size_t channel) {
    return values[(band * kFeatureFrames + frame) * kFeatureChannels + channel];
  }
  float at(std::size_t band, std::size_t frame, std::size_t channel) const {
    return values[(band * kFeatureFrames + frame) * kFeatureChannels + channel];
  }
  bool operator==(const FeatureTensor&) const = default;
};

// Regression delta along columns (time) with edge replication:
// d_t = sum_{n=1..N} n (x_{t+n} - x_{t-n}) / (2 sum n^2).
Matrix delta(const Matrix& x, std::size_t half_width = kDeltaHalfWidth);

// Stacks [x, delta(x), delta(delta(x))] and center-crops 132 -> 128 frames.
FeatureTensor add_deltas(const Matrix& logspec, SpectrogramKind kind);

// Per-channel scalar standardization statistics for one spectrogram kind.
struct ChannelStats {
  std::array<double, kFeatureChannels> mean{0.0, 0.0, 0.0};
  std::array<double, kFeatureChannels> stddev{1.0, 1.0, 1.0};
  bool operator==(const ChannelStats&) const = default;
};

class ChannelStatsAccumulator {
 public:
  void add(const FeatureTensor& t);
  ChannelStats finish() const;

 private:
  std::array<double, kFeatureChannels> sum_{};
  std::array<double, kFeatureChannels> sum_sq_{};
  std::size_t count_ = 0;
};

void standardize(FeatureTensor& t, const ChannelStats& stats);

// Owns the filterbank for one kind so repeated featurization stays cheap.
// Immutable after construction; safe to share across threads.
class Frontend {
 public:
  explicit Frontend(SpectrogramKind kind);
  explicit Frontend(const SpectrogramConfig& config);

  const SpectrogramConfig& config() const { return config_; }
  const FilterBank& bank() const { return bank_; }

  // stft_power -> apply_filterbank -> add_deltas, then standardization
  // when stats are given.
  FeatureTensor featurize(const AudioClip& clip, const std::optional<ChannelStats>& stats = std::nullopt) const;

 private:
  SpectrogramConfig config_;
  FilterBank bank_;
};

FeatureTensor featurize(const AudioClip& clip, SpectrogramKind kind,
                        const std::optional<ChannelStats>& stats = std::nullopt);

}  // namespace kdasc
