#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kdasc/dsp/features.hpp"
#include "kdasc/model/network.hpp"
#include "kdasc/model/spec.hpp"

namespace kdasc {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedBlob {
  std::string name;
  std::vector<float> values;
  bool operator==(const NamedBlob&) const = default;
};

// Everything needed to rebuild a trained model for inference.
struct Checkpoint {
  ModelSpec spec;
  std::vector<NamedBlob> blobs;  // parameter_layout(spec) order
  bool stats_initialized = false;
  ChannelStats standardization;
  nlohmann::json train_config = nlohmann::json::object();
  std::uint16_t format_version = kCheckpointVersion;

  bool operator==(const Checkpoint&) const = default;
};

Checkpoint make_checkpoint(Network<float>& net, const ChannelStats& standardization,
                           const nlohmann::json& train_config = nlohmann::json::object());

// Copies blobs into the network; throws SpecMismatchError if the layouts differ.
void restore(Network<float>& net, const Checkpoint& ckpt);

// Instantiates and restores a network from a checkpoint.
Network<float> instantiate(const Checkpoint& ckpt);

// Binary layout:
//   "KDASC" | u16 version | u32 header length | UTF-8 JSON header | u32 header CRC32
//   u32 blob count, then per blob:
//   u32 name length | name | u64 byte length | float32 LE payload | u32 payload CRC32
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// As above, additionally requiring the stored spec to equal `expected`;
// the error names the first differing layer.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelSpec& expected);

// Throws SpecMismatchError naming the first layer where the specs differ.
void require_same_spec(const ModelSpec& stored, const ModelSpec& expected);

}  // namespace kdasc
