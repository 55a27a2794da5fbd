#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace kdasc {

inline constexpr std::size_t kNumClasses = 10;

// Fixed class order; indices are stable across runs and files.
inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "airport",        "shopping_mall", "metro_station", "street_pedestrian", "public_square",
    "street_traffic", "tram",          "bus",           "metro",             "park"};

enum class Device { A, B, C, S1, S2, S3, S4, S5, S6, Synth };
enum class Split { Train, Eval };

std::string_view to_string(Device d);
std::string_view to_string(Split s);
std::optional<Device> parse_device(std::string_view s);
std::optional<Split> parse_split(std::string_view s);
std::optional<std::size_t> class_index(std::string_view label);

struct ManifestEntry {
  std::string clip_path;  // relative to the manifest's directory unless absolute
  std::string scene_label;
  Device device = Device::Synth;
  std::string city;
  Split split = Split::Train;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names{kClassNames.begin(), kClassNames.end()};

  bool operator==(const DatasetManifest&) const = default;

  std::size_t label_index(const ManifestEntry& e) const;
  std::vector<const ManifestEntry*> split(Split s) const;
};

// Throws SchemaError / DuplicateError on invalid contents.
void validate(const DatasetManifest& manifest);

DatasetManifest parse_manifest(std::string_view text);
std::string format_manifest(const DatasetManifest& manifest);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Resolve an entry's clip path against the directory holding the manifest.
std::filesystem::path resolve_clip(const std::filesystem::path& manifest_path, const ManifestEntry& e);

}  // namespace kdasc
