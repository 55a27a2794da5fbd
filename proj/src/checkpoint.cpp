#include "kdasc/model/checkpoint.hpp"

#include "kdasc/binary_io.hpp"
#include "kdasc/error.hpp"

namespace kdasc {
namespace {

constexpr std::string_view kMagic = "KDASC";

nlohmann::json stats_to_json(const ChannelStats& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

ChannelStats stats_from_json(const nlohmann::json& j) {
  ChannelStats s;
  s.mean = j.at("mean").get<std::array<double, kFeatureChannels>>();
  s.stddev = j.at("stddev").get<std::array<double, kFeatureChannels>>();
  return s;
}

void check_layout(const Checkpoint& ckpt) {
  const auto layout = parameter_layout(ckpt.spec);
  if (layout.size() != ckpt.blobs.size()) {
    throw SpecMismatchError("checkpoint has " + std::to_string(ckpt.blobs.size()) + " blobs, spec '" +
                            ckpt.spec.name + "' requires " + std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout[i].name != ckpt.blobs[i].name || layout[i].elements != ckpt.blobs[i].values.size()) {
      throw SpecMismatchError("blob " + std::to_string(i) + " is '" + ckpt.blobs[i].name + "' with " +
                              std::to_string(ckpt.blobs[i].values.size()) + " values, spec expects '" +
                              layout[i].name + "' with " + std::to_string(layout[i].elements));
    }
  }
}

}  // namespace

void require_same_spec(const ModelSpec& stored, const ModelSpec& expected) {
  const std::size_t n = std::min(stored.layers.size(), expected.layers.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!(stored.layers[i] == expected.layers[i])) {
      throw SpecMismatchError("checkpoint spec differs from expected at layer " + layer_name(stored, i) +
                              " (expected " + layer_name(expected, i) + ")");
    }
  }
  if (stored.layers.size() != expected.layers.size()) {
    throw SpecMismatchError("checkpoint spec has " + std::to_string(stored.layers.size()) + " layers, expected " +
                            std::to_string(expected.layers.size()) + " (first unmatched layer index " +
                            std::to_string(n) + ")");
  }
  if (stored.input_shape != expected.input_shape) throw SpecMismatchError("checkpoint input shape differs");
  if (stored.embedding_layer_index != expected.embedding_layer_index) {
    throw SpecMismatchError("checkpoint embedding layer index differs");
  }
}

Checkpoint make_checkpoint(Network<float>& net, const ChannelStats& standardization,
                           const nlohmann::json& train_config) {
  Checkpoint c;
  c.spec = net.spec();
  for (auto& [name, tensor] : net.stored_tensors()) {
    c.blobs.push_back({name, tensor->storage()});
  }
  c.stats_initialized = net.ready_for_eval();
  c.standardization = standardization;
  c.train_config = train_config;
  return c;
}

void restore(Network<float>& net, const Checkpoint& ckpt) {
  require_same_spec(ckpt.spec, net.spec());
  auto tensors = net.stored_tensors();
  if (tensors.size() != ckpt.blobs.size()) throw SpecMismatchError("blob count does not match network");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& [name, tensor] = tensors[i];
    const auto& blob = ckpt.blobs[i];
    if (name != blob.name || tensor->size() != blob.values.size()) {
      throw SpecMismatchError("blob '" + blob.name + "' does not match network tensor '" + name + "'");
    }
    std::copy(blob.values.begin(), blob.values.end(), tensor->storage().begin());
  }
  if (ckpt.stats_initialized) net.mark_ready_for_eval();
}

Network<float> instantiate(const Checkpoint& ckpt) {
  Network<float> net(ckpt.spec, 0);
  restore(net, ckpt);
  return net;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  check_layout(ckpt);
  const nlohmann::json header = {{"format_version", ckpt.format_version},
                                 {"spec", to_json(ckpt.spec)},
                                 {"stats_initialized", ckpt.stats_initialized},
                                 {"standardization", stats_to_json(ckpt.standardization)},
                                 {"train_config", ckpt.train_config}};
  const std::string text = header.dump();
  ByteWriter w;
  w.raw(kMagic);
  w.u16(ckpt.format_version);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  w.u32(crc32(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size())));
  w.u32(static_cast<std::uint32_t>(ckpt.blobs.size()));
  for (const auto& b : ckpt.blobs) {
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.raw(b.name);
    w.u64(static_cast<std::uint64_t>(b.values.size()) * 4);
    ByteWriter payload;
    payload.f32_array(b.values);
    w.bytes(payload.data());
    w.u32(crc32(payload.data()));
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kMagic.size() || r.string(kMagic.size()) != kMagic) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  Checkpoint c;
  c.format_version = r.u16();
  if (c.format_version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(c.format_version) + " is incompatible (reader " +
                       "supports " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = r.u32();
  const std::size_t header_at = r.offset();
  const auto header_bytes = r.bytes(header_len);
  if (crc32(header_bytes) != r.u32()) throw CorruptionError("checkpoint header checksum mismatch", header_at);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes.begin(), header_bytes.end());
    c.spec = model_spec_from_json(header.at("spec"));
    c.stats_initialized = header.at("stats_initialized").get<bool>();
    c.standardization = stats_from_json(header.at("standardization"));
    c.train_config = header.at("train_config");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("unreadable checkpoint header: ") + e.what(), header_at);
  }
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedBlob b;
    b.name = r.string(r.u32());
    const auto byte_len = r.u64();
    if (byte_len % 4 != 0) throw CorruptionError("blob '" + b.name + "' has non-float byte length", r.offset());
    const std::size_t payload_at = r.offset();
    const auto payload = r.bytes(static_cast<std::size_t>(byte_len));
    if (crc32(payload) != r.u32()) {
      throw CorruptionError("checksum mismatch in blob '" + b.name + "'", payload_at);
    }
    ByteReader pr(payload);
    b.values.resize(static_cast<std::size_t>(byte_len / 4));
    for (auto& v : b.values) v = pr.f32();
    c.blobs.push_back(std::move(b));
  }
  if (!r.at_end()) throw CorruptionError("trailing bytes after last blob", r.offset());
  validate(c.spec);
  check_layout(c);
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelSpec& expected) {
  Checkpoint c = load_checkpoint(path);
  require_same_spec(c.spec, expected);
  return c;
}

}  // namespace kdasc
