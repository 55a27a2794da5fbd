#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kdasc/dsp/feature_cache.hpp"
#include "kdasc/dsp/features.hpp"
#include "kdasc/manifest.hpp"
#include "kdasc/nn/tensor.hpp"

namespace kdasc {

// Standardized features of one split for one spectrogram kind, in manifest order.
struct FeatureSet {
  SpectrogramKind kind = SpectrogramKind::Mel;
  std::vector<std::string> ids;  // manifest clip_path
  std::vector<std::size_t> labels;
  std::vector<FeatureTensor> features;

  std::size_t size() const { return ids.size(); }
};

// Loads cached features for every entry of `split` and standardizes them.
// Throws MissingPrerequisiteError listing every missing sample id.
FeatureSet load_feature_set(const FeatureCache& cache, const DatasetManifest& manifest, SpectrogramKind kind,
                            Split split, const ChannelStats& stats);

FeatureSet subset(const FeatureSet& set, std::span<const std::size_t> indices);

// First `per_class` samples of each class, in original order.
FeatureSet balanced_subset(const FeatureSet& set, std::size_t per_class);

// N x 128 x 128 x 3 batch from the given sample indices.
nn::Tensor<float> make_batch(const FeatureSet& set, std::span<const std::size_t> indices);

std::vector<double> one_hot(std::size_t label, std::size_t num_classes);

}  // namespace kdasc
