#include "kdasc/train/embeddings.hpp"

#include <algorithm>
#include <cmath>

#include "kdasc/binary_io.hpp"
#include "kdasc/error.hpp"

namespace kdasc {

EmbeddingStore::EmbeddingStore(std::vector<EmbeddingRecord> records) {
  for (auto& r : records) add(std::move(r));
}

const EmbeddingRecord* EmbeddingStore::find(const std::string& sample_id) const {
  for (const auto& r : records_) {
    if (r.sample_id == sample_id) return &r;
  }
  return nullptr;
}

void EmbeddingStore::add(EmbeddingRecord record) {
  for (float v : record.vector) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw ValidationError("embedding for '" + record.sample_id + "' is non-finite or negative");
    }
  }
  if (find(record.sample_id) != nullptr) throw DuplicateError("duplicate embedding for '" + record.sample_id + "'");
  records_.push_back(std::move(record));
}

std::vector<std::uint8_t> encode_embeddings(const EmbeddingStore& store) {
  ByteWriter w;
  for (const auto& r : store.records()) {
    w.u32(static_cast<std::uint32_t>(r.sample_id.size()));
    w.raw(r.sample_id);
    w.u8(static_cast<std::uint8_t>(r.kind));
    w.f32_array(r.vector);
  }
  w.u64(store.size());
  auto bytes = w.take();
  const std::uint32_t crc = crc32(bytes);
  ByteWriter tail;
  tail.u32(crc);
  const auto t = tail.take();
  bytes.insert(bytes.end(), t.begin(), t.end());
  return bytes;
}

EmbeddingStore decode_embeddings(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw CorruptionError("embedding store shorter than its trailer", bytes.size());
  const std::size_t body = bytes.size() - 4;
  ByteReader crc_reader(bytes.subspan(body));
  if (crc_reader.u32() != crc32(bytes.first(body))) throw CorruptionError("embedding store checksum mismatch", body);
  ByteReader count_reader(bytes.subspan(body - 8, 8));
  const std::uint64_t count = count_reader.u64();
  ByteReader r(bytes.first(body - 8));
  EmbeddingStore store;
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord rec;
    const std::uint32_t len = r.u32();
    rec.sample_id = r.string(len);
    const std::size_t kind_offset = r.offset();
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(SpectrogramKind::Cqt)) {
      throw CorruptionError("invalid spectrogram kind byte", kind_offset);
    }
    rec.kind = static_cast<SpectrogramKind>(kind);
    for (auto& v : rec.vector) v = r.f32();
    store.add(std::move(rec));
  }
  if (!r.at_end()) throw CorruptionError("trailing bytes before embedding store trailer", r.offset());
  return store;
}

void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  write_file_bytes(path, encode_embeddings(store));
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) { return decode_embeddings(read_file_bytes(path)); }

std::vector<float> extract_embedding(Network<float>& net, const FeatureTensor& input) {
  nn::Tensor<float> x({1, kFeatureBands, kFeatureFrames, kFeatureChannels}, input.values);
  net.forward(x, nn::Mode::Eval);
  return net.embedding().storage();
}

std::vector<float> extract_embedding(const ModelSpec& spec, const Checkpoint& ckpt, const FeatureTensor& input) {
  require_same_spec(ckpt.spec, spec);
  Network<float> net = instantiate(ckpt);
  return extract_embedding(net, input);
}

EmbeddingStore extract_all_embeddings(const Checkpoint& teacher, const FeatureSet& set, std::size_t batch_size) {
  Network<float> net = instantiate(teacher);
  EmbeddingStore store;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
    net.forward(make_batch(set, idx), nn::Mode::Eval);
    const auto& e = net.embedding();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      EmbeddingRecord rec;
      rec.sample_id = set.ids[idx[b]];
      rec.kind = set.kind;
      std::copy_n(e.data() + b * kEmbeddingDim, kEmbeddingDim, rec.vector.begin());
      store.add(std::move(rec));
    }
  }
  return store;
}

std::vector<std::array<float, kEmbeddingDim>> aligned_targets(const EmbeddingStore& store, const FeatureSet& set) {
  std::vector<std::array<float, kEmbeddingDim>> out;
  std::vector<std::string> missing;
  for (const auto& id : set.ids) {
    const auto* r = store.find(id);
    if (r == nullptr) {
      missing.push_back(id);
      continue;
    }
    if (r->kind != set.kind) {
      throw ValidationError("embedding for '" + id + "' was extracted for " + std::string(to_string(r->kind)) +
                            ", expected " + std::string(to_string(set.kind)));
    }
    out.push_back(r->vector);
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " sample(s) have no teacher embedding:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    throw MissingPrerequisiteError(msg);
  }
  return out;
}

}  // namespace kdasc
