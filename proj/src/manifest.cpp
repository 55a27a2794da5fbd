#include "kdasc/manifest.hpp"

#include <set>
#include <sstream>
#include <utility>

#include "kdasc/binary_io.hpp"
#include "kdasc/error.hpp"

namespace kdasc {
namespace {

constexpr std::array<std::pair<Device, std::string_view>, 10> kDevices = {{{Device::A, "A"},
                                                                            {Device::B, "B"},
                                                                            {Device::C, "C"},
                                                                            {Device::S1, "S1"},
                                                                            {Device::S2, "S2"},
                                                                            {Device::S3, "S3"},
                                                                            {Device::S4, "S4"},
                                                                            {Device::S5, "S5"},
                                                                            {Device::S6, "S6"},
                                                                            {Device::Synth, "SYNTH"}}};

constexpr std::string_view kHeader = "clip_path\tscene_label\tdevice_id\tcity\tsplit";

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace

std::string_view to_string(Device d) {
  for (const auto& [dev, name] : kDevices) {
    if (dev == d) return name;
  }
  return "?";
}

std::string_view to_string(Split s) { return s == Split::Train ? "TRAIN" : "EVAL"; }

std::optional<Device> parse_device(std::string_view s) {
  for (const auto& [dev, name] : kDevices) {
    if (name == s) return dev;
  }
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "TRAIN") return Split::Train;
  if (s == "EVAL") return Split::Eval;
  return std::nullopt;
}

std::optional<std::size_t> class_index(std::string_view label) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == label) return i;
  }
  return std::nullopt;
}

std::size_t DatasetManifest::label_index(const ManifestEntry& e) const {
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    if (class_names[i] == e.scene_label) return i;
  }
  throw SchemaError("unknown scene label '" + e.scene_label + "'");
}

std::vector<const ManifestEntry*> DatasetManifest::split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries) {
    if (e.split == s) out.push_back(&e);
  }
  return out;
}

void validate(const DatasetManifest& manifest) {
  if (manifest.class_names.size() != kNumClasses) {
    throw SchemaError("manifest must carry exactly " + std::to_string(kNumClasses) + " class names");
  }
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (manifest.class_names[i] != kClassNames[i]) {
      throw SchemaError("class name " + std::to_string(i) + " is '" + manifest.class_names[i] + "', expected '" +
                        std::string(kClassNames[i]) + "'");
    }
  }
  std::set<std::string> train_paths;
  std::set<std::string> eval_paths;
  for (std::size_t row = 0; row < manifest.entries.size(); ++row) {
    const auto& e = manifest.entries[row];
    if (!class_index(e.scene_label)) {
      throw SchemaError("row " + std::to_string(row + 1) + ": unknown scene label '" + e.scene_label + "'");
    }
    if (e.clip_path.empty()) throw SchemaError("row " + std::to_string(row + 1) + ": empty clip_path");
    auto& same = e.split == Split::Train ? train_paths : eval_paths;
    const auto& other = e.split == Split::Train ? eval_paths : train_paths;
    if (!same.insert(e.clip_path).second) {
      throw DuplicateError("row " + std::to_string(row + 1) + ": duplicate clip_path '" + e.clip_path +
                           "' within split " + std::string(to_string(e.split)));
    }
    if (other.contains(e.clip_path)) {
      throw DuplicateError("row " + std::to_string(row + 1) + ": clip_path '" + e.clip_path +
                           "' appears in both splits");
    }
  }
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest m;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!seen_header) {
      if (line != kHeader) throw SchemaError("line 1: expected manifest header");
      seen_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (fields.size() != 5) throw SchemaError(where + "expected 5 tab-separated fields");
    ManifestEntry e;
    e.clip_path = std::string(fields[0]);
    e.scene_label = std::string(fields[1]);
    if (!class_index(e.scene_label)) throw SchemaError(where + "unknown scene label '" + e.scene_label + "'");
    const auto dev = parse_device(fields[2]);
    if (!dev) throw SchemaError(where + "unknown device_id '" + std::string(fields[2]) + "'");
    e.device = *dev;
    e.city = std::string(fields[3]);
    const auto split = parse_split(fields[4]);
    if (!split) throw SchemaError(where + "split must be TRAIN or EVAL, got '" + std::string(fields[4]) + "'");
    e.split = *split;
    m.entries.push_back(std::move(e));
  }
  if (!seen_header) throw SchemaError("empty manifest (missing header)");
  validate(m);
  return m;
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out(kHeader);
  out += '\n';
  for (const auto& e : manifest.entries) {
    out += e.clip_path;
    out += '\t';
    out += e.scene_label;
    out += '\t';
    out += to_string(e.device);
    out += '\t';
    out += e.city;
    out += '\t';
    out += to_string(e.split);
    out += '\n';
  }
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  validate(manifest);
  write_text_file(path, format_manifest(manifest));
}

std::filesystem::path resolve_clip(const std::filesystem::path& manifest_path, const ManifestEntry& e) {
  std::filesystem::path p(e.clip_path);
  if (p.is_absolute()) return p;
  return manifest_path.parent_path() / p;
}

}  // namespace kdasc
