#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdasc/dsp/features.hpp"
#include "kdasc/model/checkpoint.hpp"
#include "kdasc/model/network.hpp"
#include "kdasc/train/dataset.hpp"

namespace kdasc {

struct EmbeddingRecord {
  std::string sample_id;
  SpectrogramKind kind = SpectrogramKind::Mel;
  std::array<float, kEmbeddingDim> vector{};

  bool operator==(const EmbeddingRecord&) const = default;
};

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::vector<EmbeddingRecord> records);

  const std::vector<EmbeddingRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const EmbeddingRecord* find(const std::string& sample_id) const;

  // Throws DuplicateError for a repeated sample id, ValidationError for a
  // non-finite or negative component.
  void add(EmbeddingRecord record);

  bool operator==(const EmbeddingStore& o) const { return records_ == o.records_; }

 private:
  std::vector<EmbeddingRecord> records_;
};

// Record: u32 id length | id | u8 kind | 64 x f32 LE.  Trailer: u64 count | u32 CRC32 of all preceding bytes.
std::vector<std::uint8_t> encode_embeddings(const EmbeddingStore& store);
EmbeddingStore decode_embeddings(std::span<const std::uint8_t> bytes);
void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);
EmbeddingStore load_embeddings(const std::filesystem::path& path);

// Eval-mode activation at the embedding tap for one standardized feature tensor.
std::vector<float> extract_embedding(Network<float>& net, const FeatureTensor& input);
// As above after checking the checkpoint against `spec` (SpecMismatchError otherwise).
std::vector<float> extract_embedding(const ModelSpec& spec, const Checkpoint& ckpt, const FeatureTensor& input);

// One record per sample of `set`, in set order.
EmbeddingStore extract_all_embeddings(const Checkpoint& teacher, const FeatureSet& set, std::size_t batch_size = 16);

// Teacher targets aligned to `set`; throws MissingPrerequisiteError listing absent ids.
std::vector<std::array<float, kEmbeddingDim>> aligned_targets(const EmbeddingStore& store, const FeatureSet& set);

}  // namespace kdasc
