#include "kdasc/audio.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kdasc/binary_io.hpp"
#include "kdasc/error.hpp"

namespace kdasc {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

struct WavFormat {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  const std::string where = " in '" + path.string() + "'";
  if (bytes.size() < 12) throw FormatError("file too short for a RIFF header" + where);

  ByteReader r(bytes);
  if (r.string(4) != "RIFF") throw FormatError("missing RIFF tag" + where);
  r.u32();
  if (r.string(4) != "WAVE") throw FormatError("missing WAVE tag" + where);

  WavFormat fmt;
  bool have_fmt = false;
  std::span<const std::uint8_t> payload;
  bool have_data = false;
  try {
    while (r.remaining() >= 8 && !(have_fmt && have_data)) {
      const std::string id = r.string(4);
      const std::uint32_t size = r.u32();
      if (size > r.remaining()) throw FormatError("chunk '" + id + "' overruns the file" + where);
      auto chunk = r.bytes(size);
      if (size % 2 == 1 && r.remaining() > 0) r.u8();
      if (id == "fmt ") {
        if (size < 16) throw FormatError("fmt chunk too short" + where);
        ByteReader f(chunk);
        fmt.format = f.u16();
        fmt.channels = f.u16();
        fmt.sample_rate = f.u32();
        f.u32();
        f.u16();
        fmt.bits = f.u16();
        if (fmt.format == kFormatExtensible) {
          if (size < 40) throw FormatError("extensible fmt chunk too short" + where);
          f.u16();
          f.u16();
          f.u32();
          fmt.format = f.u16();  // first two bytes of the subformat GUID
        }
        have_fmt = true;
      } else if (id == "data") {
        payload = chunk;
        have_data = true;
      }
    }
  } catch (const CorruptionError& e) {
    throw FormatError(std::string("truncated RIFF structure: ") + e.what() + where);
  }
  if (!have_fmt) throw FormatError("no fmt chunk" + where);
  if (!have_data) throw FormatError("no data chunk" + where);
  if (fmt.channels == 0 || fmt.sample_rate == 0) throw FormatError("zero channels or sample rate" + where);

  const bool pcm16 = fmt.format == kFormatPcm && fmt.bits == 16;
  const bool pcm32 = fmt.format == kFormatPcm && fmt.bits == 32;
  const bool f32 = fmt.format == kFormatFloat && fmt.bits == 32;
  if (!pcm16 && !pcm32 && !f32) {
    throw UnsupportedCodecError("unsupported encoding (format " + std::to_string(fmt.format) + ", " +
                                std::to_string(fmt.bits) + " bits)" + where);
  }

  const std::size_t bytes_per_sample = fmt.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  const std::size_t frames = payload.size() / frame_bytes;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(fmt.sample_rate);
  clip.samples.resize(frames);
  ByteReader d(payload);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::uint16_t c = 0; c < fmt.channels; ++c) {
      double v = 0.0;
      if (pcm16) {
        v = static_cast<double>(static_cast<std::int16_t>(d.u16())) / 32768.0;
      } else if (pcm32) {
        v = static_cast<double>(static_cast<std::int32_t>(d.u32())) / 2147483648.0;
      } else {
        const float s = d.f32();
        v = std::isfinite(s) ? std::clamp(static_cast<double>(s), -1.0, 1.0) : 0.0;
      }
      acc += v;
    }
    clip.samples[i] = static_cast<float>(acc / fmt.channels);
  }
  return clip;
}

void save_wav_interleaved(const std::filesystem::path& path, const std::vector<float>& interleaved,
                          int channels, int sample_rate, WavEncoding encoding) {
  if (channels <= 0 || sample_rate <= 0) throw ValidationError("channels and sample_rate must be positive");
  const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t format = encoding == WavEncoding::Float32 ? kFormatFloat : kFormatPcm;
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * (bits / 8));

  ByteWriter w;
  w.raw("RIFF");
  w.u32(36 + data_bytes);
  w.raw("WAVE");
  w.raw("fmt ");
  w.u32(16);
  w.u16(format);
  w.u16(static_cast<std::uint16_t>(channels));
  w.u32(static_cast<std::uint32_t>(sample_rate));
  w.u32(static_cast<std::uint32_t>(sample_rate * channels * (bits / 8)));
  w.u16(static_cast<std::uint16_t>(channels * (bits / 8)));
  w.u16(bits);
  w.raw("data");
  w.u32(data_bytes);
  for (float s : interleaved) {
    switch (encoding) {
      case WavEncoding::Pcm16: {
        const double q = std::clamp(std::nearbyint(static_cast<double>(s) * 32768.0), -32768.0, 32767.0);
        w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
        break;
      }
      case WavEncoding::Pcm32: {
        const double q =
            std::clamp(std::nearbyint(static_cast<double>(s) * 2147483648.0), -2147483648.0, 2147483647.0);
        w.u32(static_cast<std::uint32_t>(static_cast<std::int32_t>(q)));
        break;
      }
      case WavEncoding::Float32:
        w.f32(s);
        break;
    }
  }
  write_file_bytes(path, w.data());
}

void save_wav(const std::filesystem::path& path, const AudioClip& clip, WavEncoding encoding) {
  save_wav_interleaved(path, clip.samples, 1, clip.sample_rate, encoding);
}

std::vector<AudioClip> segment_clip(const AudioClip& clip, double segment_seconds) {
  if (!(segment_seconds > 0.0)) throw ValidationError("segment_seconds must be positive");
  if (clip.samples.empty()) throw EmptyInputError("cannot segment an empty clip");
  const auto seg_len = static_cast<std::size_t>(std::llround(segment_seconds * clip.sample_rate));
  if (seg_len == 0) throw ValidationError("segment shorter than one sample");

  const std::size_t n = clip.samples.size();
  const std::size_t count = (n + seg_len - 1) / seg_len;
  std::vector<AudioClip> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    AudioClip seg;
    seg.sample_rate = clip.sample_rate;
    seg.samples.assign(seg_len, 0.0f);
    const std::size_t begin = s * seg_len;
    const std::size_t end = std::min(n, begin + seg_len);
    std::copy(clip.samples.begin() + static_cast<std::ptrdiff_t>(begin),
              clip.samples.begin() + static_cast<std::ptrdiff_t>(end), seg.samples.begin());
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace kdasc
