#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kdasc/audit/complexity.hpp"
#include "kdasc/dsp/stft.hpp"
#include "kdasc/fusion/metrics.hpp"
#include "kdasc/model/spec.hpp"
#include "kdasc/train/trainer.hpp"

namespace kdasc {

// Flat, fully resolved configuration shared by every command.
struct RunConfig {
  std::filesystem::path data_dir = "data";   // synthetic dataset root (audio/, manifest.tsv)
  std::filesystem::path manifest;            // defaults to <data_dir>/manifest.tsv
  std::filesystem::path work_dir = "run";    // checkpoints, embeddings, reports, metrics
  std::filesystem::path cache_dir;           // defaults to <work_dir>/cache; KDASC_CACHE overrides
  std::vector<SpectrogramKind> kinds{std::begin(kAllKinds), std::end(kAllKinds)};
  std::uint64_t seed = 2023;
  std::map<SpectrogramKind, std::uint64_t> kind_seeds;  // explicit per-kind overrides

  std::size_t clips_per_class = 100;

  TeacherConfig teacher;
  TrainConfig teacher_train = default_teacher_train();
  TrainConfig student_train = default_student_train();
  std::size_t eval_batch_size = 32;
  bool parallel_kinds = false;
  bool quiet = false;

  static TrainConfig default_teacher_train();
  static TrainConfig default_student_train();

  std::filesystem::path manifest_path() const;
  std::filesystem::path cache_path() const;
  // Seed for one kind's pipeline: the explicit override, else derived from `seed`.
  std::uint64_t kind_seed(SpectrogramKind kind) const;

  // Throws ConfigError on conflicting or out-of-range settings.
  void validate() const;
};

// Applies `key = value` pairs (from a file or flags) to a config.
// Unknown keys and malformed values raise ConfigError.
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
// Reads a flat `key = value` file; `#` starts a comment.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);
// Help text for every config key, tagged with its provenance.
std::string describe_config_keys();
// Applies KDASC_CACHE when set.
void apply_environment(RunConfig& cfg);
std::string format_run_config(const RunConfig& cfg);

enum class StudentVariant { Distilled, Plain };
std::string_view to_string(StudentVariant v);

// Output locations, all pure functions of the config.
struct ArtifactPaths {
  std::filesystem::path root;
  std::filesystem::path teacher_checkpoint(SpectrogramKind k) const;
  std::filesystem::path teacher_report(SpectrogramKind k) const;
  std::filesystem::path embeddings(SpectrogramKind k) const;
  std::filesystem::path student_checkpoint(SpectrogramKind k, StudentVariant v) const;
  std::filesystem::path student_report(SpectrogramKind k, StudentVariant v) const;
  std::filesystem::path system_metrics(const std::string& system) const;
  std::filesystem::path comparison_tsv() const;
  std::filesystem::path comparison_txt() const;
  std::filesystem::path audit_tsv() const;
};
ArtifactPaths artifact_paths(const RunConfig& cfg);

// Progress sink (standard error by default); thread-safe.
using LogSink = std::function<void(const std::string&)>;
void set_log_sink(LogSink sink);
void log_line(const std::string& line);

// Commands. Each validates its prerequisites and throws
// MissingPrerequisiteError naming the command to run first.
DatasetManifest cmd_synth(const RunConfig& cfg);

struct FeaturizeSummary {
  SpectrogramKind kind = SpectrogramKind::Mel;
  std::size_t computed = 0;
  std::size_t cached = 0;
  bool stats_written = false;
};
FeaturizeSummary cmd_featurize(const RunConfig& cfg, SpectrogramKind kind);

TrainReport cmd_train_teacher(const RunConfig& cfg, SpectrogramKind kind);
std::size_t cmd_embed(const RunConfig& cfg, SpectrogramKind kind);
TrainReport cmd_train_student(const RunConfig& cfg, SpectrogramKind kind, StudentVariant variant);
SystemMetrics cmd_evaluate(const RunConfig& cfg, SpectrogramKind kind, StudentVariant variant);
SystemMetrics cmd_fuse_eval(const RunConfig& cfg, StudentVariant variant);

struct AuditOutput {
  std::string table;    // per-layer TSV
  std::string verdict;  // FITS / EXCEEDS line
  bool fits = false;
};
// `model` is "student", "teacher" or "ensemble" (three students).
AuditOutput cmd_audit(const RunConfig& cfg, const std::string& model, MacConvention convention);

// Builds the comparison table from the stored metrics of every system.
Comparison cmd_report(const RunConfig& cfg, bool include_reference = true);

struct KindStatus {
  SpectrogramKind kind = SpectrogramKind::Mel;
  bool ok = false;
  std::string stage;  // last stage reached
  std::string error;
};
struct TrainAllResult {
  std::vector<KindStatus> kinds;
  std::optional<Comparison> comparison;
  bool ok() const;
};

// featurize -> teacher -> embed -> student (both variants) per kind, then
// fused evaluation and the report. Failures are recorded per kind.
TrainAllResult train_all(const RunConfig& cfg);

// Student column display figures.
double student_memory_kb();
double student_macs_m();

}  // namespace kdasc
