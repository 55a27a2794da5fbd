#include "kdasc/dsp/feature_cache.hpp"

#include <sstream>

#include "kdasc/binary_io.hpp"
#include "kdasc/error.hpp"

namespace kdasc {
namespace {

constexpr std::string_view kMagic = "KDFEAT";
constexpr std::uint16_t kVersion = 1;

std::uint8_t kind_code(SpectrogramKind k) { return static_cast<std::uint8_t>(k); }

}  // namespace

std::vector<std::uint8_t> encode_features(const FeatureTensor& t) {
  if (t.values.size() != kFeatureSize) throw ShapeError("feature tensor must be 128x128x3");
  ByteWriter w;
  w.raw(kMagic);
  w.u16(kVersion);
  w.u8(kind_code(t.kind));
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(kFeatureSize));
  w.f32_array(t.values);
  return w.take();
}

FeatureTensor decode_features(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 16 || r.string(6) != kMagic) throw FormatError("not a feature file (bad magic)");
  const auto version = r.u16();
  if (version != kVersion) throw VersionError("feature file version " + std::to_string(version) + " unsupported");
  const auto code = r.u8();
  if (code > 2) throw FormatError("bad spectrogram kind code in feature file");
  r.u8();
  r.u8();
  r.u8();
  if (r.u32() != kFeatureSize) throw FormatError("feature file element count mismatch");
  FeatureTensor t;
  t.kind = static_cast<SpectrogramKind>(code);
  for (auto& v : t.values) v = r.f32();
  if (!r.at_end()) throw FormatError("trailing bytes in feature file");
  return t;
}

std::string sanitize_clip_path(const std::string& clip_path) {
  std::string out;
  for (char c : clip_path) {
    if (c == '/' || c == '\\') {
      out += "__";
    } else if (c == ':') {
      out += '_';
    } else {
      out += c;
    }
  }
  return out;
}

std::filesystem::path FeatureCache::kind_dir(SpectrogramKind kind) const {
  return root_ / std::string(to_string(kind));
}

std::filesystem::path FeatureCache::path_for(const std::string& clip_path, SpectrogramKind kind) const {
  return kind_dir(kind) / (sanitize_clip_path(clip_path) + ".feat");
}

bool FeatureCache::contains(const std::string& clip_path, SpectrogramKind kind) const {
  const auto p = path_for(clip_path, kind);
  std::error_code ec;
  return std::filesystem::is_regular_file(p, ec) &&
         std::filesystem::file_size(p, ec) == 16 + 4 * kFeatureSize;
}

FeatureTensor FeatureCache::load(const std::string& clip_path, SpectrogramKind kind) const {
  const auto p = path_for(clip_path, kind);
  if (!std::filesystem::exists(p)) {
    throw MissingPrerequisiteError("no cached " + std::string(to_string(kind)) + " features for '" + clip_path +
                                   "'");
  }
  FeatureTensor t = decode_features(read_file_bytes(p));
  if (t.kind != kind) throw FormatError("cached feature kind mismatch for '" + clip_path + "'");
  return t;
}

void FeatureCache::store(const std::string& clip_path, const FeatureTensor& t) const {
  write_file_bytes(path_for(clip_path, t.kind), encode_features(t));
}

void FeatureCache::write_index(SpectrogramKind kind, const std::vector<std::string>& clip_paths) const {
  std::string text = "clip_path\tfeature_file\n";
  for (const auto& c : clip_paths) {
    text += c + "\t" + path_for(c, kind).filename().string() + "\n";
  }
  write_text_file(kind_dir(kind) / "index.tsv", text);
}

std::vector<std::string> FeatureCache::read_index(SpectrogramKind kind) const {
  const auto p = kind_dir(kind) / "index.tsv";
  if (!std::filesystem::exists(p)) return {};
  const auto bytes = read_file_bytes(p);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos) out.push_back(line.substr(0, tab));
  }
  return out;
}

void FeatureCache::save_stats(SpectrogramKind kind, const ChannelStats& stats) const {
  std::string text = "channel\tmean\tstddev\n";
  for (std::size_t c = 0; c < kFeatureChannels; ++c) {
    text += std::to_string(c) + "\t" + format_double(stats.mean[c]) + "\t" + format_double(stats.stddev[c]) + "\n";
  }
  write_text_file(kind_dir(kind) / "stats.tsv", text);
}

std::optional<ChannelStats> FeatureCache::load_stats(SpectrogramKind kind) const {
  const auto p = kind_dir(kind) / "stats.tsv";
  if (!std::filesystem::exists(p)) return std::nullopt;
  const auto bytes = read_file_bytes(p);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::getline(in, line);
  ChannelStats s;
  for (std::size_t c = 0; c < kFeatureChannels; ++c) {
    if (!std::getline(in, line)) throw FormatError("stats file truncated: " + p.string());
    std::istringstream row(line);
    std::string idx, mean, sd;
    std::getline(row, idx, '\t');
    std::getline(row, mean, '\t');
    std::getline(row, sd, '\t');
    s.mean[c] = std::stod(mean);
    s.stddev[c] = std::stod(sd);
  }
  return s;
}

}  // namespace kdasc
