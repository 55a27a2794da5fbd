#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "dsp_checks.hpp"
#include "kdasc/binary_io.hpp"
#include "kdasc/dsp/feature_cache.hpp"
#include "kdasc/dsp/features.hpp"
#include "kdasc/dsp/fft.hpp"
#include "kdasc/dsp/filterbank.hpp"
#include "kdasc/dsp/stft.hpp"
#include "kdasc/error.hpp"
#include "kdasc/synth.hpp"
#include "support.hpp"

using namespace kdasc;
using kdasc::test::TempDir;

namespace {

AudioClip sine(double hz, double amplitude = 1.0, std::size_t n = 44100) {
  AudioClip c;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / 44100.0));
  }
  return c;
}

AudioClip white_noise(std::uint64_t seed) {
  Rng rng(seed);
  AudioClip c;
  c.samples.resize(44100);
  for (auto& v : c.samples) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return c;
}

std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> s = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      s += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n));
    }
    out[k] = s;
  }
  return out;
}

}  // namespace

TEST(Fft, MatchesNaiveDft) {
  Rng rng(1);
  for (std::size_t n : {2, 16, 64, 512}) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.uniform(-1, 1);
    const auto ref = naive_dft(x);
    const auto got = FftPlan(n).forward_real(x);
    ASSERT_EQ(got.size(), n / 2 + 1);
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_LT(std::abs(got[k] - ref[k]), 1e-9 * static_cast<double>(n));
  }
  EXPECT_THROW(FftPlan(12), ValidationError);
}

TEST(Stft, FrameCountsAre136Then132) {
  const auto cfg = SpectrogramConfig::defaults(SpectrogramKind::Mel);
  const auto clip = sine(440.0);
  const auto full = stft_power_full(clip, cfg);
  EXPECT_EQ(full.rows, 2049u);
  EXPECT_EQ(full.cols, 136u);
  const auto cropped = stft_power(clip, cfg);
  EXPECT_EQ(cropped.cols, 132u);
  for (std::size_t k = 0; k < full.rows; ++k) {
    for (std::size_t t = 0; t < 132; ++t) ASSERT_EQ(cropped(k, t), full(k, t + 2));
  }
}

TEST(Stft, ZeroClipGivesZeroPower) {
  AudioClip zero;
  zero.samples.assign(44100, 0.0f);
  const auto p = stft_power(zero, SpectrogramConfig::defaults(SpectrogramKind::Mel));
  for (double v : p.data) ASSERT_EQ(v, 0.0);
}

TEST(Stft, PeriodicHannCenteredInFrame) {
  const auto cfg = SpectrogramConfig::defaults(SpectrogramKind::Mel);
  const auto w = padded_hann(cfg);
  ASSERT_EQ(w.size(), 4096u);
  for (std::size_t i = 0; i < 1024; ++i) EXPECT_EQ(w[i], 0.0);
  for (std::size_t i = 3072; i < 4096; ++i) EXPECT_EQ(w[i], 0.0);
  EXPECT_EQ(w[1024], 0.0);
  EXPECT_NEAR(w[1024 + 1024], 1.0, 1e-15);
  EXPECT_NEAR(w[1024 + 512], 0.5, 1e-15);
  EXPECT_NEAR(w[1025], w[3071], 1e-15);
}

TEST(Stft, SineAt1000HzPeaksAtBin93OnInteriorFrames) {
  const auto cfg = SpectrogramConfig::defaults(SpectrogramKind::Mel);
  const auto clip = sine(1000.0);
  const auto full = stft_power_full(clip, cfg);
  std::size_t interior = 0;
  for (std::size_t t = 0; t < full.cols; ++t) {
    const long center = static_cast<long>(t * cfg.hop_length);
    if (center - 1024 < 0 || center + 1024 > 44100) continue;
    std::size_t arg = 0;
    for (std::size_t k = 1; k < full.rows; ++k) {
      if (full(k, t) > full(arg, t)) arg = k;
    }
    EXPECT_EQ(arg, 93u) << "frame " << t;
    ++interior;
  }
  EXPECT_GT(interior, 100u);
  EXPECT_EQ(std::lround(1000.0 * 4096.0 / 44100.0), 93);

  // Independent oracle: direct DFT of one windowed frame.
  const auto frame = windowed_frame(clip, cfg, 60);
  const auto ref = naive_dft(frame);
  std::size_t arg = 0;
  for (std::size_t k = 1; k <= 2048; ++k) {
    if (std::norm(ref[k]) > std::norm(ref[arg])) arg = k;
  }
  EXPECT_EQ(arg, 93u);
  for (std::size_t k : {90, 93, 96, 500}) EXPECT_NEAR(full(k, 60), std::norm(ref[k]), 1e-9 * (1.0 + std::norm(ref[93])));
}

TEST(Stft, ParsevalOnOneFrame) {
  const auto cfg = SpectrogramConfig::defaults(SpectrogramKind::Mel);
  const auto clip = white_noise(4);
  const auto full = stft_power_full(clip, cfg);
  for (std::size_t t : {0, 17, 68, 135}) {
    const auto frame = windowed_frame(clip, cfg, t);
    double energy = 0.0;
    for (double v : frame) energy += v * v;
    std::vector<double> column(full.rows);
    for (std::size_t k = 0; k < full.rows; ++k) column[k] = full(k, t);
    EXPECT_NEAR(one_sided_energy(column, cfg.n_fft), energy, 1e-6 * energy) << "frame " << t;
  }
}

TEST(Stft, WrongSampleRateIsConfigError) {
  auto clip = sine(440.0);
  clip.sample_rate = 48000;
  EXPECT_THROW(stft_power(clip, SpectrogramConfig::defaults(SpectrogramKind::Mel)), ConfigError);
  EXPECT_THROW(stft_power(AudioClip{}, SpectrogramConfig::defaults(SpectrogramKind::Mel)), ValidationError);
}

TEST(MelBank, RowsNonemptyAndCentersMonotone) {
  const auto cfg = SpectrogramConfig::defaults(SpectrogramKind::Mel);
  const auto bank = build_mel_filterbank(cfg);
  ASSERT_EQ(bank.n_filters(), 128u);
  ASSERT_EQ(bank.n_bins(), 2049u);
  for (std::size_t f = 0; f < 128; ++f) {
    double mx = 0.0;
    for (std::size_t b = 0; b < bank.n_bins(); ++b) {
      ASSERT_GE(bank.weights(f, b), 0.0);
      mx = std::max(mx, bank.weights(f, b));
    }
    EXPECT_GT(mx, 0.0) << f;
    EXPECT_GE(bank.center_frequencies[f], cfg.fmin);
    EXPECT_LE(bank.center_frequencies[f], cfg.fmax);
    if (f > 0) EXPECT_GT(bank.center_frequencies[f], bank.center_frequencies[f - 1]);
  }
  // Centers equally spaced in HTK mel.
  const double step = hz_to_mel(bank.center_frequencies[1]) - hz_to_mel(bank.center_frequencies[0]);
  for (std::size_t f = 1; f < 128; ++f) {
    EXPECT_NEAR(hz_to_mel(bank.center_frequencies[f]) - hz_to_mel(bank.center_frequencies[f - 1]), step, 1e-9);
  }
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-12);
}

TEST(MelBank, TooManyFiltersIsConstructionError) {
  auto cfg = SpectrogramConfig::defaults(SpectrogramKind::Mel);
  cfg.n_filters = 1500;
  EXPECT_THROW(build_mel_filterbank(cfg), ConstructionError);
  cfg.n_filters = 128;
  cfg.kind = SpectrogramKind::Gam;
  EXPECT_THROW(build_mel_filterbank(cfg), ConfigError);
}

TEST(GammatoneBank, ErbSpacingPeakNormalizationAndSelectivity) {
  const auto cfg = SpectrogramConfig::defaults(SpectrogramKind::Gam);
  EXPECT_EQ(cfg.fmin, 50.0);
  const auto bank = build_gammatone_filterbank(cfg);
  const auto& c = bank.center_frequencies;
  const double step = erb_number(c[1]) - erb_number(c[0]);
  for (std::size_t f = 1; f < c.size(); ++f) EXPECT_NEAR(erb_number(c[f]) - erb_number(c[f - 1]), step, 1e-9);
  EXPECT_NEAR(c.front(), 50.0, 1e-9);
  EXPECT_NEAR(c.back(), 22050.0, 1e-9);
  const double df = 44100.0 / 4096.0;
  for (std::size_t f = 0; f < bank.n_filters(); ++f) {
    double mx = 0.0;
    for (std::size_t b = 0; b < bank.n_bins(); ++b) mx = std::max(mx, bank.weights(f, b));
    EXPECT_NEAR(mx, 1.0, 1e-9) << f;
    const double erb = erb_bandwidth(c[f]);
    EXPECT_GE(gammatone_magnitude(c[f], c[f]), gammatone_magnitude(c[f] + 2.0 * erb, c[f]));
    EXPECT_GE(gammatone_magnitude(c[f], c[f]), gammatone_magnitude(c[f] - 2.0 * erb, c[f]));
    // Same ordering on the sampled row.
    const auto at = [&](double hz) { return bank.weights(f, static_cast<std::size_t>(std::lround(hz / df))); };
    if (c[f] + 2.0 * erb <= 22050.0) EXPECT_GE(at(c[f]), at(c[f] + 2.0 * erb));
    if (c[f] - 2.0 * erb >= 0.0) EXPECT_GE(at(c[f]), at(c[f] - 2.0 * erb));
  }
}

TEST(CqtBank, GeometricConstantQAndOctaveDoubling) {
  const auto cfg = SpectrogramConfig::defaults(SpectrogramKind::Cqt);
  EXPECT_NEAR(cfg.fmin, 32.7, 1e-12);
  EXPECT_EQ(cfg.bins_per_octave, 16);
  const auto bank = build_cqt_filterbank(cfg);
  const auto& c = bank.center_frequencies;
  const double ratio = c[1] / c[0];
  const double q = bank.bandwidths[0] / c[0];
  for (std::size_t k = 1; k < c.size(); ++k) {
    EXPECT_NEAR(c[k] / c[k - 1], ratio, 1e-9);
    EXPECT_NEAR(bank.bandwidths[k] / c[k], q, 1e-9);
  }
  for (std::size_t k = 0; k + 16 < c.size(); ++k) EXPECT_NEAR(c[k + 16] / (2.0 * c[k]), 1.0, 1e-6);
  EXPECT_NEAR(q, 1.0 / constant_q(16), 1e-12);
  EXPECT_LE(c.back(), cfg.fmax);
  for (std::size_t f = 0; f < bank.n_filters(); ++f) {
    double l1 = 0.0;
    for (std::size_t b = 0; b < bank.n_bins(); ++b) l1 += bank.weights(f, b);
    EXPECT_NEAR(l1, 1.0, 1e-12);
  }
}

TEST(CqtBank, TopCenterAboveFmaxIsConstructionError) {
  auto cfg = SpectrogramConfig::defaults(SpectrogramKind::Cqt);
  cfg.bins_per_octave = 13;
  EXPECT_THROW(build_cqt_filterbank(cfg), ConstructionError);
}

TEST(Filterbanks, ToneAtCenterIsArgmaxForResolvableInteriorFilters) {
  for (auto kind : kAllKinds) {
    const auto r = test::check_tone_localization(kind);
    EXPECT_GE(r.tested, 75u) << to_string(kind);
    EXPECT_TRUE(r.failures.empty()) << to_string(kind) << " first failure at filter " << r.failures.front();
  }
}

TEST(ApplyFilterbank, ZeroAndSingleBinRows) {
  FilterBank bank;
  bank.weights = Matrix(2, 4);
  bank.weights(0, 2) = 1.0;
  bank.weights(1, 0) = 0.5;
  bank.weights(1, 3) = 0.5;
  const auto zero = apply_filterbank(Matrix(4, 3), bank);
  for (double v : zero.data) EXPECT_EQ(v, std::log(kLogEpsilon));
  Matrix p(4, 3);
  for (std::size_t i = 0; i < p.data.size(); ++i) p.data[i] = 0.25 * static_cast<double>(i + 1);
  const auto out = apply_filterbank(p, bank);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(out(0, t), std::log(p(2, t) + 1e-10));
  EXPECT_THROW(apply_filterbank(Matrix(5, 3), bank), ShapeError);
}

TEST(ApplyFilterbank, MatchesNaiveTripleLoopAndIsLinear) {
  Rng rng(5);
  FilterBank bank;
  bank.weights = Matrix(4, 5);
  for (auto& v : bank.weights.data) v = rng.uniform(0.0, 1.0);
  Matrix a(5, 3), b(5, 3);
  for (auto& v : a.data) v = rng.uniform(0.0, 2.0);
  for (auto& v : b.data) v = rng.uniform(0.0, 2.0);
  const auto out = apply_filterbank(a, bank);
  for (std::size_t f = 0; f < 4; ++f)
    for (std::size_t t = 0; t < 3; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < 5; ++k) s += bank.weights(f, k) * a(k, t);
      EXPECT_NEAR(out(f, t), std::log(s + 1e-10), 1e-12);
    }
  Matrix sum(5, 3);
  for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] = a.data[i] + b.data[i];
  const auto la = apply_filterbank_linear(a, bank);
  const auto lb = apply_filterbank_linear(b, bank);
  const auto ls = apply_filterbank_linear(sum, bank);
  for (std::size_t i = 0; i < ls.data.size(); ++i) EXPECT_NEAR(ls.data[i], la.data[i] + lb.data[i], 1e-6 * ls.data[i]);
}

TEST(Deltas, RampAndConstantClosedForms) {
  const auto r = test::check_delta_closed_forms();
  EXPECT_TRUE(r.ramp_delta_exact);
  EXPECT_TRUE(r.ramp_delta_delta_zero);
  EXPECT_TRUE(r.constant_all_zero);
}

TEST(Deltas, TimeReversalNegatesDelta) {
  Rng rng(6);
  Matrix x(128, 132), rev(128, 132);
  for (std::size_t b = 0; b < 128; ++b)
    for (std::size_t t = 0; t < 132; ++t) x(b, t) = rev(b, 131 - t) = rng.uniform(-5, 5);
  const auto d = delta(x);
  const auto dr = delta(rev);
  for (std::size_t b = 0; b < 128; ++b)
    for (std::size_t t = 0; t < 132; ++t) EXPECT_NEAR(dr(b, 131 - t), -d(b, t), 1e-12);
}

TEST(Deltas, WrongShapeIsShapeError) {
  EXPECT_THROW(add_deltas(Matrix(128, 128), SpectrogramKind::Mel), ShapeError);
  EXPECT_THROW(add_deltas(Matrix(64, 132), SpectrogramKind::Mel), ShapeError);
}

TEST(Featurize, ShapeAndFinitenessOnFullScaleNoise) {
  for (auto kind : kAllKinds) {
    const auto t = featurize(white_noise(9), kind);
    EXPECT_EQ(t.kind, kind);
    ASSERT_EQ(t.values.size(), 128u * 128u * 3u);
    for (float v : t.values) ASSERT_TRUE(std::isfinite(v)) << to_string(kind);
  }
}

TEST(Featurize, ZeroClipHasConstantStaticAndZeroDeltas) {
  AudioClip zero;
  zero.samples.assign(44100, 0.0f);
  for (auto kind : kAllKinds) {
    const auto t = featurize(zero, kind);
    for (std::size_t b = 0; b < 128; ++b)
      for (std::size_t f = 0; f < 128; ++f) {
        ASSERT_EQ(t.at(b, f, 0), static_cast<float>(std::log(kLogEpsilon)));
        ASSERT_EQ(t.at(b, f, 1), 0.0f);
        ASSERT_EQ(t.at(b, f, 2), 0.0f);
      }
  }
}

TEST(Featurize, DeterministicAndSeparatesExtremeClasses) {
  const auto c0 = synthesize_clip(0, 123);
  const auto c9 = synthesize_clip(9, 123);
  const Frontend mel(SpectrogramKind::Mel);
  const auto a = mel.featurize(c0);
  EXPECT_EQ(a, mel.featurize(c0));
  const auto b = mel.featurize(c9);
  double l2 = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) l2 += std::pow(a.values[i] - b.values[i], 2);
  EXPECT_GT(std::sqrt(l2), 0.0);
}

TEST(Featurize, StandardizationUsesTrainStatistics) {
  ChannelStatsAccumulator acc;
  std::vector<FeatureTensor> ts;
  for (std::uint64_t s = 0; s < 3; ++s) {
    ts.push_back(featurize(synthesize_clip(s * 3, s), SpectrogramKind::Gam));
    acc.add(ts.back());
  }
  const auto stats = acc.finish();
  double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
  for (auto t : ts) {
    standardize(t, stats);
    for (std::size_t i = 0; i < kFeatureSize; ++i) {
      sum[i % 3] += t.values[i];
      sq[i % 3] += static_cast<double>(t.values[i]) * t.values[i];
    }
  }
  const double n = 3.0 * 128 * 128;
  for (int c = 0; c < 3; ++c) {
    EXPECT_NEAR(sum[c] / n, 0.0, 1e-4);
    EXPECT_NEAR(sq[c] / n, 1.0, 1e-3);
  }
}

TEST(Featurize, SyntheticClassesAreLinearlySeparableOnBandEnergies) {
  // Nearest centroid on time-averaged mel band energies (a linear rule).
  const Frontend mel(SpectrogramKind::Mel);
  auto band_means = [&](std::size_t cls, std::uint64_t seed) {
    const auto t = mel.featurize(synthesize_clip(cls, seed));
    std::vector<double> m(128, 0.0);
    for (std::size_t b = 0; b < 128; ++b)
      for (std::size_t f = 0; f < 128; ++f) m[b] += t.at(b, f, 0) / 128.0;
    return m;
  };
  std::vector<std::vector<double>> centroid(10, std::vector<double>(128, 0.0));
  for (std::size_t c = 0; c < 10; ++c)
    for (std::uint64_t s = 0; s < 6; ++s) {
      const auto m = band_means(c, mix_seed(c, s));
      for (std::size_t b = 0; b < 128; ++b) centroid[c][b] += m[b] / 6.0;
    }
  std::size_t separated = 0;
  for (std::size_t c = 0; c < 10; ++c) {
    std::size_t correct = 0;
    for (std::uint64_t s = 100; s < 104; ++s) {
      const auto m = band_means(c, mix_seed(c, s));
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t k = 0; k < 10; ++k) {
        double d = 0.0;
        for (std::size_t b = 0; b < 128; ++b) d += (m[b] - centroid[k][b]) * (m[b] - centroid[k][b]);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (best == c) ++correct;
    }
    if (correct >= 3) ++separated;
  }
  EXPECT_GE(separated, 8u);
}

TEST(FeatureCache, EncodeDecodeAndStoreRoundTrip) {
  TempDir dir;
  auto t = featurize(white_noise(11), SpectrogramKind::Cqt);
  const auto bytes = encode_features(t);
  EXPECT_EQ(bytes.size(), 16u + 4u * kFeatureSize);
  EXPECT_EQ(decode_features(bytes), t);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_features(bad), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 4);
  EXPECT_THROW(decode_features(truncated), Error);

  FeatureCache cache(dir.path());
  EXPECT_FALSE(cache.contains("audio/x.wav", SpectrogramKind::Cqt));
  EXPECT_THROW(cache.load("audio/x.wav", SpectrogramKind::Cqt), MissingPrerequisiteError);
  cache.store("audio/x.wav", t);
  EXPECT_TRUE(cache.contains("audio/x.wav", SpectrogramKind::Cqt));
  EXPECT_EQ(cache.load("audio/x.wav", SpectrogramKind::Cqt), t);
  ChannelStats stats;
  stats.mean = {-3.5, 0.25, 1e-3};
  stats.stddev = {2.0, 0.125, 0.7};
  cache.save_stats(SpectrogramKind::Cqt, stats);
  EXPECT_EQ(cache.load_stats(SpectrogramKind::Cqt), stats);
  cache.write_index(SpectrogramKind::Cqt, {"audio/x.wav"});
  EXPECT_EQ(cache.read_index(SpectrogramKind::Cqt), std::vector<std::string>{"audio/x.wav"});
}
