#include "kdasc/dsp/features.hpp"

#include <cmath>
#include <string>

#include "kdasc/error.hpp"

namespace kdasc {

Matrix delta(const Matrix& x, std::size_t half_width) {
  if (half_width == 0) throw ConfigError("delta half-width must be >= 1");
  double denom = 0.0;
  for (std::size_t n = 1; n <= half_width; ++n) denom += static_cast<double>(n * n);
  denom *= 2.0;
  Matrix out(x.rows, x.cols);
  if (x.cols == 0) return out;
  const auto last = static_cast<std::ptrdiff_t>(x.cols) - 1;
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* row = &x.data[r * x.cols];
    for (std::size_t t = 0; t < x.cols; ++t) {
      double acc = 0.0;
      for (std::size_t n = 1; n <= half_width; ++n) {
        const auto tn = static_cast<std::ptrdiff_t>(t);
        const auto nn = static_cast<std::ptrdiff_t>(n);
        const double ahead = row[std::min(tn + nn, last)];
        const double behind = row[std::max(tn - nn, std::ptrdiff_t{0})];
        acc += static_cast<double>(n) * (ahead - behind);
      }
      out(r, t) = acc / denom;
    }
  }
  return out;
}

FeatureTensor add_deltas(const Matrix& logspec, SpectrogramKind kind) {
  constexpr std::size_t kInputFrames = kFeatureFrames + 4;
  if (logspec.rows != kFeatureBands || logspec.cols != kInputFrames) {
    throw ShapeError("add_deltas expects 128 x 132, got " + std::to_string(logspec.rows) + " x " +
                     std::to_string(logspec.cols));
  }
  const Matrix d1 = delta(logspec);
  const Matrix d2 = delta(d1);
  constexpr std::size_t lead = (kInputFrames - kFeatureFrames) / 2;
  FeatureTensor out;
  out.kind = kind;
  for (std::size_t b = 0; b < kFeatureBands; ++b) {
    for (std::size_t t = 0; t < kFeatureFrames; ++t) {
      out.at(b, t, 0) = static_cast<float>(logspec(b, t + lead));
      out.at(b, t, 1) = static_cast<float>(d1(b, t + lead));
      out.at(b, t, 2) = static_cast<float>(d2(b, t + lead));
    }
  }
  return out;
}

void ChannelStatsAccumulator::add(const FeatureTensor& t) {
  for (std::size_t i = 0; i < kFeatureSize; ++i) {
    const double v = t.values[i];
    sum_[i % kFeatureChannels] += v;
    sum_sq_[i % kFeatureChannels] += v * v;
  }
  ++count_;
}

ChannelStats ChannelStatsAccumulator::finish() const {
  ChannelStats s;
  if (count_ == 0) return s;
  const double n = static_cast<double>(count_) * kFeatureBands * kFeatureFrames;
  for (std::size_t c = 0; c < kFeatureChannels; ++c) {
    s.mean[c] = sum_[c] / n;
    const double var = std::max(0.0, sum_sq_[c] / n - s.mean[c] * s.mean[c]);
    const double sd = std::sqrt(var);
    s.stddev[c] = sd > 1e-8 ? sd : 1.0;
  }
  return s;
}

void standardize(FeatureTensor& t, const ChannelStats& stats) {
  for (std::size_t i = 0; i < kFeatureSize; ++i) {
    const std::size_t c = i % kFeatureChannels;
    t.values[i] = static_cast<float>((static_cast<double>(t.values[i]) - stats.mean[c]) / stats.stddev[c]);
  }
}

Frontend::Frontend(SpectrogramKind kind) : Frontend(SpectrogramConfig::defaults(kind)) {}

Frontend::Frontend(const SpectrogramConfig& config) : config_(config), bank_(build_filterbank(config)) {
  if (config_.n_filters != kFeatureBands || config_.frames != kFeatureFrames + 4) {
    throw ConfigError("front-end must produce 128 bands x 132 frames");
  }
}

FeatureTensor Frontend::featurize(const AudioClip& clip, const std::optional<ChannelStats>& stats) const {
  const Matrix power = stft_power(clip, config_);
  FeatureTensor t = add_deltas(apply_filterbank(power, bank_), config_.kind);
  if (stats) standardize(t, *stats);
  return t;
}

FeatureTensor featurize(const AudioClip& clip, SpectrogramKind kind, const std::optional<ChannelStats>& stats) {
  return Frontend(kind).featurize(clip, stats);
}

}  // namespace kdasc
