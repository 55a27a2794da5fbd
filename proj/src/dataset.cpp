#include "kdasc/train/dataset.hpp"

#include <algorithm>

#include "kdasc/error.hpp"

namespace kdasc {

FeatureSet load_feature_set(const FeatureCache& cache, const DatasetManifest& manifest, SpectrogramKind kind,
                            Split split, const ChannelStats& stats) {
  FeatureSet set;
  set.kind = kind;
  std::vector<std::string> missing;
  for (const auto* e : manifest.split(split)) {
    if (!cache.contains(e->clip_path, kind)) {
      missing.push_back(e->clip_path);
      continue;
    }
    FeatureTensor t = cache.load(e->clip_path, kind);
    standardize(t, stats);
    set.ids.push_back(e->clip_path);
    set.labels.push_back(manifest.label_index(*e));
    set.features.push_back(std::move(t));
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " " + std::string(to_string(kind)) +
                      " feature file(s) missing from cache " + cache.root().string() + ":";
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (i == 20) {
        msg += " ... (" + std::to_string(missing.size() - 20) + " more)";
        break;
      }
      msg += " " + missing[i];
    }
    throw MissingPrerequisiteError(msg);
  }
  return set;
}

FeatureSet subset(const FeatureSet& set, std::span<const std::size_t> indices) {
  FeatureSet out;
  out.kind = set.kind;
  for (auto i : indices) {
    if (i >= set.size()) throw ValidationError("subset index out of range");
    out.ids.push_back(set.ids[i]);
    out.labels.push_back(set.labels[i]);
    out.features.push_back(set.features[i]);
  }
  return out;
}

FeatureSet balanced_subset(const FeatureSet& set, std::size_t per_class) {
  std::vector<std::size_t> taken(kNumClasses, 0), idx;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (taken.at(set.labels[i])++ < per_class) idx.push_back(i);
  }
  return subset(set, idx);
}

nn::Tensor<float> make_batch(const FeatureSet& set, std::span<const std::size_t> indices) {
  nn::Tensor<float> x({indices.size(), kFeatureBands, kFeatureFrames, kFeatureChannels});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& v = set.features.at(indices[b]).values;
    std::copy(v.begin(), v.end(), x.data() + b * kFeatureSize);
  }
  return x;
}

std::vector<double> one_hot(std::size_t label, std::size_t num_classes) {
  if (label >= num_classes) throw ValidationError("label " + std::to_string(label) + " out of range");
  std::vector<double> v(num_classes, 0.0);
  v[label] = 1.0;
  return v;
}

}  // namespace kdasc
