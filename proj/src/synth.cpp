#include "kdasc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "kdasc/error.hpp"
#include "kdasc/rng.hpp"

namespace kdasc {
namespace {

// RBJ band-pass biquad, 0 dB peak gain.
struct Biquad {
  double b0, b1, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  Biquad(double center, double q, double fs) {
    const double w0 = 2.0 * std::numbers::pi * center / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0 = alpha / a0;
    b1 = 0.0;
    b2 = -alpha / a0;
    a1 = -2.0 * std::cos(w0) / a0;
    a2 = (1.0 - alpha) / a0;
  }

  double step(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

constexpr std::size_t kWarmup = 4096;

}  // namespace

const std::array<SynthClassParams, kNumClasses>& synth_class_params() {
  static const std::array<SynthClassParams, kNumClasses> params = {{
      {180.0, 1.5, 0.0, 0.0, 0.6},
      {320.0, 2.0, 3.0, 0.0, 0.3},
      {560.0, 2.5, 0.0, 1200.0, 0.5},
      {900.0, 1.5, 7.0, 0.0, 0.0},
      {1400.0, 3.0, 1.5, 600.0, 0.7},
      {2100.0, 2.0, 12.0, 0.0, 0.2},
      {3100.0, 2.5, 0.0, 240.0, 0.4},
      {4600.0, 1.5, 5.0, 0.0, 0.0},
      {6800.0, 2.0, 20.0, 0.0, 0.3},
      {10000.0, 1.5, 0.0, 3500.0, 0.1},
  }};
  return params;
}

AudioClip synthesize_clip(std::size_t class_index, std::uint64_t clip_seed, int sample_rate) {
  if (class_index >= kNumClasses) throw ValidationError("class index out of range");
  if (sample_rate <= 0) throw ValidationError("sample_rate must be positive");
  const auto& p = synth_class_params()[class_index];
  Rng rng(clip_seed);
  const double fs = sample_rate;
  const double nyquist_guard = 0.45 * fs;

  const double center = std::min(p.band_center_hz * std::exp(rng.uniform(-0.05, 0.05)), nyquist_guard);
  const double am_rate = p.am_rate_hz * rng.uniform(0.9, 1.1);
  const double am_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double tone = std::min(p.tone_hz * rng.uniform(0.99, 1.01), nyquist_guard);
  const double tone_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double gain = rng.uniform(0.5, 1.0);

  const auto n = static_cast<std::size_t>(sample_rate);
  std::vector<double> band(n);
  Biquad f1(center, p.band_q, fs);
  Biquad f2(center, p.band_q, fs);
  double coloured = 0.0;
  for (std::size_t i = 0; i < kWarmup + n; ++i) {
    coloured = p.noise_colour * coloured + (1.0 - p.noise_colour) * rng.normal();
    const double y = f2.step(f1.step(coloured));
    if (i >= kWarmup) band[i - kWarmup] = y;
  }
  const double rms =
      std::sqrt(std::inner_product(band.begin(), band.end(), band.begin(), 0.0) / static_cast<double>(n));
  const double band_scale = rms > 0.0 ? 1.0 / rms : 0.0;

  std::vector<double> out(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs;
    double env = 1.0;
    if (am_rate > 0.0) env = 1.0 + 0.8 * std::sin(2.0 * std::numbers::pi * am_rate * t + am_phase);
    double v = band[i] * band_scale * env;
    if (tone > 0.0) v += 0.7 * std::sin(2.0 * std::numbers::pi * tone * t + tone_phase);
    v += 0.02 * rng.normal();
    out[i] = v;
    peak = std::max(peak, std::abs(v));
  }
  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(n);
  const double scale = peak > 0.0 ? 0.8 * gain / peak : 0.0;
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = static_cast<float>(out[i] * scale);
  return clip;
}

DatasetManifest generate_synthetic_dataset(const std::filesystem::path& out_dir, std::uint64_t seed,
                                           std::size_t per_class, int sample_rate) {
  if (per_class < 2) throw ValidationError("per_class must be at least 2");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "audio", ec);
  if (ec) throw IoError("cannot create '" + (out_dir / "audio").string() + "': " + ec.message());

  const auto n_eval = static_cast<std::size_t>(std::llround(kEvalFraction * static_cast<double>(per_class)));
  DatasetManifest manifest;
  Rng split_rng(mix_seed(seed, 0x5EED5));
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> order(per_class);
    std::iota(order.begin(), order.end(), 0);
    split_rng.shuffle(order);
    std::vector<bool> is_eval(per_class, false);
    for (std::size_t k = 0; k < n_eval; ++k) is_eval[order[k]] = true;

    for (std::size_t i = 0; i < per_class; ++i) {
      char name[96];
      std::snprintf(name, sizeof(name), "audio/%s_%03zu.wav", std::string(kClassNames[c]).c_str(), i);
      const AudioClip clip = synthesize_clip(c, mix_seed(seed, c * 1000003ULL + i), sample_rate);
      save_wav(out_dir / name, clip, WavEncoding::Pcm16);
      ManifestEntry e;
      e.clip_path = name;
      e.scene_label = std::string(kClassNames[c]);
      e.device = Device::Synth;
      e.city = "synthetic";
      e.split = is_eval[i] ? Split::Eval : Split::Train;
      manifest.entries.push_back(std::move(e));
    }
  }
  save_manifest(manifest, out_dir / "manifest.tsv");
  return manifest;
}

}  // namespace kdasc
