#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdasc/fusion/fusion.hpp"

namespace kdasc {

inline constexpr double kProbClamp = 1e-12;

struct ClassMetrics {
  std::string name;
  std::size_t count = 0;     // EVAL samples of this class
  bool present = false;
  double accuracy = 0.0;     // fraction in [0, 1]
  double log_loss = 0.0;
};

// One column of the results table.
struct SystemMetrics {
  std::string name;
  std::vector<ClassMetrics> classes;
  double average_accuracy = 0.0;  // macro mean over present classes
  double average_log_loss = 0.0;
  std::optional<double> memory_kb;
  std::optional<double> macs_m;
  std::vector<std::string> warnings;
};

// Clamped negative log probability.
double clamped_nll(double p);

// Core: predicted label and probability given to the true class per sample.
SystemMetrics evaluate_predictions(const std::string& name, std::span<const std::size_t> predicted,
                                   std::span<const double> true_class_prob, std::span<const std::size_t> labels,
                                   std::span<const std::string> class_names);

// Single-model posteriors: argmax labels and -log p[label].
SystemMetrics evaluate_posteriors(const std::string& name, std::span<const ClassPosterior> posteriors,
                                  std::span<const std::size_t> labels, std::span<const std::string> class_names);

// Fused system: accuracy from the raw fused argmax, log loss from the
// renormalized fused vector.
SystemMetrics evaluate_fused(const std::string& name, std::span<const FusionResult> fused,
                             std::span<const std::size_t> labels, std::span<const std::string> class_names);

// Column built from externally supplied numbers (accuracy given in percent).
struct ReferenceRow {
  std::string class_name;
  double accuracy_pct = 0.0;
  double log_loss = 0.0;
};
SystemMetrics reference_column(const std::string& name, std::span<const ReferenceRow> rows,
                               std::span<const std::string> class_names, std::optional<double> average_accuracy_pct,
                               std::optional<double> average_log_loss, std::optional<double> memory_kb,
                               std::optional<double> macs_m);

// Published challenge-baseline column, for display only.
SystemMetrics dcase_baseline_reference(std::span<const std::string> class_names);
// Published fused-with-distillation averages (accuracy percent, log loss); documentation only.
inline constexpr double kPublishedFusedAccuracyPct = 57.4;
inline constexpr double kPublishedFusedLogLoss = 1.333;

// Reads a reference column from a TSV of `class<TAB>acc_pct<TAB>logloss`
// lines; optional `Average`, `Memory (KB)` and `MACs (M)` rows.
SystemMetrics load_reference_column(const std::string& name, const std::filesystem::path& path,
                                    std::span<const std::string> class_names);

struct Comparison {
  std::vector<SystemMetrics> systems;
  // Each delta column is systems[to] minus systems[from].
  std::vector<std::pair<std::size_t, std::size_t>> delta_pairs;
  std::vector<SystemMetrics> deltas;
};

// Throws ValidationError when the class sets differ.
Comparison compare_systems(std::vector<SystemMetrics> systems,
                           std::vector<std::pair<std::size_t, std::size_t>> delta_pairs = {});

// Tab-separated: class, then acc and logloss per column, then Average,
// Memory (KB), MACs (M) rows. Accuracies in percent.
std::string format_metrics_tsv(const Comparison& cmp);
// Aligned text table with `acc/logloss` cells.
std::string format_metrics_table(const Comparison& cmp);

}  // namespace kdasc
