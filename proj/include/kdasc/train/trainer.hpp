#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kdasc/fusion/fusion.hpp"
#include "kdasc/model/checkpoint.hpp"
#include "kdasc/model/network.hpp"
#include "kdasc/nn/optim.hpp"
#include "kdasc/train/dataset.hpp"

namespace kdasc {

struct MixupConfig {
  bool enabled = false;
  double alpha = 0.4;
  // When set, every pair uses this lambda instead of a Beta(alpha, alpha) draw.
  std::optional<double> fixed_lambda;
  bool operator==(const MixupConfig&) const = default;
};

struct LossWeights {
  double ce = 1.0;
  double mse = 1.0;
  bool operator==(const LossWeights&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  MixupConfig mixup;
  LossWeights loss_weights;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  bool operator==(const TrainConfig&) const = default;

  // Throws ConfigError on out-of-range fields.
  void validate() const;
  nn::AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double ce = 0.0;        // sample-weighted means over the epoch
  double mse = 0.0;
  double train_acc = 0.0;
  double eval_acc = 0.0;
  double eval_logloss = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global optimizer step, 1-based
  double ce = 0.0;
  double mse = 0.0;
  double total = 0.0;    // w_ce * ce + w_mse * mse
};

struct TrainReport {
  std::string model_name;
  std::string kind;
  TrainConfig config;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::size_t best_epoch = 0;  // 0 when no epoch completed
  double wall_seconds = 0.0;
  bool aborted = false;
  std::string diagnostics;
};

// Per-epoch lines: epoch, ce, mse, train_acc, eval_acc, eval_logloss.
std::string format_train_report(const TrainReport& report);
std::string format_step_log(const TrainReport& report);
// Config echo, seed, best epoch, wall clock and abort status.
nlohmann::json train_summary(const TrainReport& report);

struct TrainOutcome {
  Checkpoint checkpoint;  // best-eval weights (or last good ones on abort)
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainInputs {
  const FeatureSet* train = nullptr;
  const FeatureSet* eval = nullptr;  // model selection; final weights kept when null
  ChannelStats standardization;
  // Teacher embeddings aligned with *train (student distillation only).
  const std::vector<std::array<float, kEmbeddingDim>>* targets = nullptr;
  std::string kind_label;
  EpochCallback on_epoch;
  // Checked after every epoch; returning true ends training early.
  std::function<bool(const EpochRecord&)> should_stop;
};

// Phase I: cross-entropy on (optionally mixup-augmented) batches.
TrainOutcome train_teacher(const ModelSpec& spec, const TrainInputs& in, const TrainConfig& config);

// Phase II: w_ce * CE + w_mse * MSE(student tap, teacher embedding); mixup is
// never applied. Targets are required when w_mse > 0.
TrainOutcome train_student(const ModelSpec& spec, const TrainInputs& in, const TrainConfig& config);

// Eval-mode posteriors for every sample of `set`.
std::vector<ClassPosterior> predict_posteriors(Network<float>& net, const FeatureSet& set,
                                               std::size_t batch_size = 32);

}  // namespace kdasc
