#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kdasc/dsp/features.hpp"

namespace kdasc {

// Binary feature file: 16-byte header ("KDFEAT", u16 version, u8 kind,
// 3 reserved bytes, u32 element count), then 128*128*3 float32 LE values in
// frequency, time, channel order.
std::vector<std::uint8_t> encode_features(const FeatureTensor& t);
FeatureTensor decode_features(std::span<const std::uint8_t> bytes);

// On-disk cache of raw (unstandardized) features, one directory per kind:
//   <root>/<KIND>/<sanitized clip path>.feat
//   <root>/<KIND>/index.tsv   clip_path <TAB> feature file
//   <root>/<KIND>/stats.tsv   channel <TAB> mean <TAB> stddev (TRAIN split)
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path kind_dir(SpectrogramKind kind) const;
  std::filesystem::path path_for(const std::string& clip_path, SpectrogramKind kind) const;

  bool contains(const std::string& clip_path, SpectrogramKind kind) const;
  FeatureTensor load(const std::string& clip_path, SpectrogramKind kind) const;
  void store(const std::string& clip_path, const FeatureTensor& t) const;

  void write_index(SpectrogramKind kind, const std::vector<std::string>& clip_paths) const;
  std::vector<std::string> read_index(SpectrogramKind kind) const;

  void save_stats(SpectrogramKind kind, const ChannelStats& stats) const;
  std::optional<ChannelStats> load_stats(SpectrogramKind kind) const;

 private:
  std::filesystem::path root_;
};

std::string sanitize_clip_path(const std::string& clip_path);

}  // namespace kdasc
