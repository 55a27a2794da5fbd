#include "kdasc/train/pipeline.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "kdasc/audio.hpp"
#include "kdasc/binary_io.hpp"
#include "kdasc/dsp/feature_cache.hpp"
#include "kdasc/error.hpp"
#include "kdasc/manifest.hpp"
#include "kdasc/synth.hpp"
#include "kdasc/train/embeddings.hpp"

namespace kdasc {
namespace fs = std::filesystem;

namespace {

std::mutex g_log_mutex;
LogSink g_log_sink;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
  return out;
}

std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": not a nonnegative integer: '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

SpectrogramKind parse_kind_or_throw(const std::string& s) {
  const auto k = parse_kind(s);
  if (!k) throw ConfigError("unknown spectrogram kind '" + s + "' (expected MEL, GAM or CQT)");
  return *k;
}

std::string kind_str(SpectrogramKind k) { return std::string(to_string(k)); }

std::string system_name(SpectrogramKind k, StudentVariant v) {
  return kind_str(k) + (v == StudentVariant::Plain ? " w/o dis." : " w/ dis.");
}
std::string ensemble_name(StudentVariant v) {
  return v == StudentVariant::Plain ? "Ens. Students w/o dis." : "Ens. Students w/ dis.";
}
std::string system_file_stem(const std::string& kind_or_ens, StudentVariant v) {
  return kind_or_ens + "_" + std::string(to_string(v));
}

ChannelStats require_stats(const FeatureCache& cache, SpectrogramKind kind) {
  const auto stats = cache.load_stats(kind);
  if (!stats) {
    throw MissingPrerequisiteError("no " + kind_str(kind) + " features in cache " + cache.root().string() +
                                   "; run `kdasc_cli featurize --kinds " + kind_str(kind) + "` first");
  }
  return *stats;
}

DatasetManifest require_manifest(const RunConfig& cfg) {
  const auto path = cfg.manifest_path();
  if (!fs::exists(path)) {
    throw MissingPrerequisiteError("manifest " + path.string() + " not found; run `kdasc_cli synth` first");
  }
  return load_manifest(path);
}

Checkpoint require_checkpoint(const fs::path& path, const std::string& run_first) {
  if (!fs::exists(path)) {
    throw MissingPrerequisiteError("checkpoint " + path.string() + " not found; run `" + run_first + "` first");
  }
  return load_checkpoint(path);
}

void write_report_files(const fs::path& tsv_path, const TrainReport& report) {
  write_text_file(tsv_path, format_train_report(report));
  auto steps = tsv_path;
  steps.replace_extension(".steps.tsv");
  write_text_file(steps, format_step_log(report));
  auto summary = tsv_path;
  summary.replace_extension(".summary.json");
  write_text_file(summary, train_summary(report).dump(2) + "\n");
}

EpochCallback epoch_logger(const std::string& what) {
  return [what](const EpochRecord& e) {
    log_line(what + " epoch " + std::to_string(e.epoch) + ": ce=" + format_fixed(e.ce, 4) +
             " mse=" + format_fixed(e.mse, 4) + " train_acc=" + format_fixed(e.train_acc, 3) +
             " eval_acc=" + format_fixed(e.eval_acc, 3) + " eval_logloss=" + format_fixed(e.eval_logloss, 4));
  };
}

std::vector<ClassPosterior> eval_posteriors(const RunConfig& cfg, const DatasetManifest& manifest,
                                            const Checkpoint& ckpt, SpectrogramKind kind,
                                            std::vector<std::size_t>& labels, std::vector<std::string>& ids) {
  const FeatureCache cache(cfg.cache_path());
  const FeatureSet eval = load_feature_set(cache, manifest, kind, Split::Eval, ckpt.standardization);
  Network<float> net = instantiate(ckpt);
  labels = eval.labels;
  ids = eval.ids;
  return predict_posteriors(net, eval, cfg.eval_batch_size);
}

std::string student_cmd(SpectrogramKind k, StudentVariant v) {
  return "kdasc_cli train_student --kinds " + kind_str(k) +
         (v == StudentVariant::Plain ? " --variant nodis" : " --variant dis");
}

}  // namespace

TrainConfig RunConfig::default_teacher_train() {
  TrainConfig c;
  c.epochs = 100;
  c.mixup.enabled = true;
  c.mixup.alpha = 0.4;
  c.loss_weights = {1.0, 0.0};
  return c;
}

TrainConfig RunConfig::default_student_train() {
  TrainConfig c;
  c.epochs = 200;
  c.mixup.enabled = false;
  c.loss_weights = {1.0, 1.0};
  return c;
}

fs::path RunConfig::manifest_path() const { return manifest.empty() ? data_dir / "manifest.tsv" : manifest; }
fs::path RunConfig::cache_path() const { return cache_dir.empty() ? work_dir / "cache" : cache_dir; }

std::uint64_t RunConfig::kind_seed(SpectrogramKind kind) const {
  const auto it = kind_seeds.find(kind);
  if (it != kind_seeds.end()) return it->second;
  return mix_seed(seed, static_cast<std::uint64_t>(kind) + 1);
}

void RunConfig::validate() const {
  if (kinds.empty()) throw ConfigError("kinds: at least one spectrogram kind is required");
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    for (std::size_t j = i + 1; j < kinds.size(); ++j) {
      if (kinds[i] == kinds[j]) throw ConfigError("kinds: " + kind_str(kinds[i]) + " listed twice");
    }
  }
  if (clips_per_class == 0) throw ConfigError("clips_per_class must be at least 1");
  if (eval_batch_size == 0) throw ConfigError("eval_batch_size must be at least 1");
  if (teacher.channels.empty()) throw ConfigError("teacher_channels must list at least one stage");
  try {
    teacher_train.validate();
    student_train.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("train settings: ") + e.what());
  }
  if (student_train.mixup.enabled) throw ConfigError("mixup cannot be enabled for students");
  if (teacher_train.loss_weights.mse != 0.0) throw ConfigError("teachers train on cross-entropy only");
  // Surfaces spatial-collapse errors before anything runs.
  kdasc::validate(build_teacher(teacher));
}

void apply_setting(RunConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  auto count = [&] { return parse_count(key, v); };
  auto real = [&] { return parse_real(key, v); };
  if (key == "data_dir") {
    cfg.data_dir = v;
  } else if (key == "manifest") {
    cfg.manifest = v;
  } else if (key == "work_dir") {
    cfg.work_dir = v;
  } else if (key == "cache_dir") {
    cfg.cache_dir = v;
  } else if (key == "kinds") {
    cfg.kinds.clear();
    for (const auto& k : split_list(v)) cfg.kinds.push_back(parse_kind_or_throw(k));
  } else if (key == "seed") {
    cfg.seed = count();
  } else if (key.rfind("seed.", 0) == 0) {
    cfg.kind_seeds[parse_kind_or_throw(key.substr(5))] = count();
  } else if (key == "clips_per_class") {
    cfg.clips_per_class = count();
  } else if (key == "teacher_channels") {
    cfg.teacher.channels.clear();
    for (const auto& c : split_list(v)) cfg.teacher.channels.push_back(parse_count(key, c));
  } else if (key == "teacher_kernel") {
    cfg.teacher.kernel = count();
  } else if (key == "teacher_epochs") {
    cfg.teacher_train.epochs = count();
  } else if (key == "teacher_batch_size") {
    cfg.teacher_train.batch_size = count();
  } else if (key == "teacher_lr") {
    cfg.teacher_train.learning_rate = real();
  } else if (key == "mixup") {
    cfg.teacher_train.mixup.enabled = parse_bool(key, v);
  } else if (key == "mixup_alpha") {
    cfg.teacher_train.mixup.alpha = real();
  } else if (key == "mixup_lambda") {
    if (v == "none" || v.empty()) {
      cfg.teacher_train.mixup.fixed_lambda.reset();
    } else {
      cfg.teacher_train.mixup.fixed_lambda = real();
    }
  } else if (key == "student_epochs") {
    cfg.student_train.epochs = count();
  } else if (key == "student_batch_size") {
    cfg.student_train.batch_size = count();
  } else if (key == "student_lr") {
    cfg.student_train.learning_rate = real();
  } else if (key == "w_ce") {
    cfg.student_train.loss_weights.ce = real();
  } else if (key == "w_mse") {
    cfg.student_train.loss_weights.mse = real();
  } else if (key == "eval_batch_size") {
    cfg.eval_batch_size = count();
  } else if (key == "parallel_kinds") {
    cfg.parallel_kinds = parse_bool(key, v);
  } else if (key == "quiet") {
    cfg.quiet = parse_bool(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingPrerequisiteError("config file " + path.string() + " not found");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected `key = value`");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

std::string describe_config_keys() {
  return R"(Config keys (`key = value`, one per line; flags override the file):
  data_dir            synthetic dataset root                          [implementation choice]
  manifest            manifest TSV (default <data_dir>/manifest.tsv)   [implementation choice]
  work_dir            checkpoints, embeddings, reports, metrics        [implementation choice]
  cache_dir           feature cache (default <work_dir>/cache; KDASC_CACHE wins) [implementation choice]
  kinds               comma list of MEL, GAM, CQT                      [published setting: three spectrograms]
  seed                master seed; per-kind seeds derive from it       [implementation choice]
  seed.MEL|GAM|CQT    explicit per-kind seed                           [implementation choice]
  clips_per_class     synthetic clips per class (default 100)          [implementation choice]
  teacher_channels    residual stage widths (default 32,64,128,256)    [implementation choice]
  teacher_kernel      residual conv kernel (default 3)                 [implementation choice]
  teacher_epochs      default 100                                      [implementation choice]
  teacher_batch_size  default 32                                       [implementation choice]
  teacher_lr          Adam learning rate, default 0.001                [published setting: Adam; rate is an implementation choice]
  mixup               on/off for teachers (default on)                 [published setting]
  mixup_alpha         Beta(alpha, alpha), default 0.4                  [implementation choice]
  mixup_lambda        fixed lambda instead of Beta draws, or none      [implementation choice]
  student_epochs      default 200                                      [implementation choice]
  student_batch_size  default 32                                       [implementation choice]
  student_lr          Adam learning rate, default 0.001                [published setting: Adam; rate is an implementation choice]
  w_ce, w_mse         student loss weights, default 1 and 1            [published setting: 1:1 ratio]
  eval_batch_size     inference batch size, default 32                 [implementation choice]
  parallel_kinds      run the three kinds concurrently (default false) [implementation choice]
)";
}

void apply_environment(RunConfig& cfg) {
  if (const char* env = std::getenv("KDASC_CACHE"); env != nullptr && *env != '\0') cfg.cache_dir = env;
}

std::string format_run_config(const RunConfig& cfg) {
  std::string kinds;
  for (auto k : cfg.kinds) kinds += (kinds.empty() ? "" : ",") + kind_str(k);
  std::string channels;
  for (auto c : cfg.teacher.channels) channels += (channels.empty() ? "" : ",") + std::to_string(c);
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  kv("data_dir", cfg.data_dir.string());
  kv("manifest", cfg.manifest_path().string());
  kv("work_dir", cfg.work_dir.string());
  kv("cache_dir", cfg.cache_path().string());
  kv("kinds", kinds);
  kv("seed", std::to_string(cfg.seed));
  for (auto k : cfg.kinds) kv("seed." + kind_str(k), std::to_string(cfg.kind_seed(k)));
  kv("clips_per_class", std::to_string(cfg.clips_per_class));
  kv("teacher_channels", channels);
  kv("teacher_kernel", std::to_string(cfg.teacher.kernel));
  kv("teacher_epochs", std::to_string(cfg.teacher_train.epochs));
  kv("teacher_batch_size", std::to_string(cfg.teacher_train.batch_size));
  kv("teacher_lr", format_double(cfg.teacher_train.learning_rate));
  kv("mixup", cfg.teacher_train.mixup.enabled ? "on" : "off");
  kv("mixup_alpha", format_double(cfg.teacher_train.mixup.alpha));
  kv("mixup_lambda", cfg.teacher_train.mixup.fixed_lambda ? format_double(*cfg.teacher_train.mixup.fixed_lambda)
                                                          : "none");
  kv("student_epochs", std::to_string(cfg.student_train.epochs));
  kv("student_batch_size", std::to_string(cfg.student_train.batch_size));
  kv("student_lr", format_double(cfg.student_train.learning_rate));
  kv("w_ce", format_double(cfg.student_train.loss_weights.ce));
  kv("w_mse", format_double(cfg.student_train.loss_weights.mse));
  kv("eval_batch_size", std::to_string(cfg.eval_batch_size));
  kv("parallel_kinds", cfg.parallel_kinds ? "true" : "false");
  return out;
}

std::string_view to_string(StudentVariant v) { return v == StudentVariant::Distilled ? "dis" : "nodis"; }

fs::path ArtifactPaths::teacher_checkpoint(SpectrogramKind k) const {
  return root / "teachers" / (kind_str(k) + ".ckpt");
}
fs::path ArtifactPaths::teacher_report(SpectrogramKind k) const {
  return root / "teachers" / (kind_str(k) + ".report.tsv");
}
fs::path ArtifactPaths::embeddings(SpectrogramKind k) const { return root / "embeddings" / (kind_str(k) + ".emb"); }
fs::path ArtifactPaths::student_checkpoint(SpectrogramKind k, StudentVariant v) const {
  return root / "students" / (system_file_stem(kind_str(k), v) + ".ckpt");
}
fs::path ArtifactPaths::student_report(SpectrogramKind k, StudentVariant v) const {
  return root / "students" / (system_file_stem(kind_str(k), v) + ".report.tsv");
}
fs::path ArtifactPaths::system_metrics(const std::string& system) const { return root / "metrics" / (system + ".tsv"); }
fs::path ArtifactPaths::comparison_tsv() const { return root / "metrics" / "comparison.tsv"; }
fs::path ArtifactPaths::comparison_txt() const { return root / "metrics" / "comparison.txt"; }
fs::path ArtifactPaths::audit_tsv() const { return root / "audit" / "student.tsv"; }

ArtifactPaths artifact_paths(const RunConfig& cfg) { return {cfg.work_dir}; }

void set_log_sink(LogSink sink) {
  std::lock_guard lock(g_log_mutex);
  g_log_sink = std::move(sink);
}

void log_line(const std::string& line) {
  std::lock_guard lock(g_log_mutex);
  if (g_log_sink) {
    g_log_sink(line);
  } else {
    std::fputs(("[kdasc] " + line + "\n").c_str(), stderr);
  }
}

DatasetManifest cmd_synth(const RunConfig& cfg) {
  log_line("synthesizing " + std::to_string(cfg.clips_per_class) + " clips/class into " + cfg.data_dir.string());
  auto m = generate_synthetic_dataset(cfg.data_dir, cfg.seed, cfg.clips_per_class);
  if (!cfg.manifest.empty() && cfg.manifest != cfg.data_dir / "manifest.tsv") save_manifest(m, cfg.manifest);
  return m;
}

FeaturizeSummary cmd_featurize(const RunConfig& cfg, SpectrogramKind kind) {
  const auto manifest_path = cfg.manifest_path();
  const DatasetManifest manifest = require_manifest(cfg);
  const FeatureCache cache(cfg.cache_path());
  FeaturizeSummary s;
  s.kind = kind;
  std::optional<Frontend> frontend;
  std::vector<std::string> all;
  for (const auto& e : manifest.entries) {
    all.push_back(e.clip_path);
    if (cache.contains(e.clip_path, kind)) {
      ++s.cached;
      continue;
    }
    if (!frontend) frontend.emplace(kind);
    const auto wav = resolve_clip(manifest_path, e);
    if (!fs::exists(wav)) {
      throw MissingPrerequisiteError("audio file " + wav.string() + " not found; run `kdasc_cli synth` first");
    }
    cache.store(e.clip_path, frontend->featurize(load_wav(wav)));
    ++s.computed;
  }
  if (s.computed == 0 && cache.load_stats(kind)) {
    log_line(kind_str(kind) + ": cache hit for all " + std::to_string(s.cached) + " clips; nothing to do");
    return s;
  }
  ChannelStatsAccumulator acc;
  for (const auto* e : manifest.split(Split::Train)) acc.add(cache.load(e->clip_path, kind));
  cache.save_stats(kind, acc.finish());
  cache.write_index(kind, all);
  s.stats_written = true;
  log_line(kind_str(kind) + ": featurized " + std::to_string(s.computed) + " clips (" + std::to_string(s.cached) +
           " cached)");
  return s;
}

TrainReport cmd_train_teacher(const RunConfig& cfg, SpectrogramKind kind) {
  cfg.validate();
  const DatasetManifest manifest = require_manifest(cfg);
  const FeatureCache cache(cfg.cache_path());
  const ChannelStats stats = require_stats(cache, kind);
  const FeatureSet train = load_feature_set(cache, manifest, kind, Split::Train, stats);
  const FeatureSet eval = load_feature_set(cache, manifest, kind, Split::Eval, stats);
  TrainConfig tc = cfg.teacher_train;
  tc.seed = mix_seed(cfg.kind_seed(kind), 1);
  TrainInputs in{&train, &eval, stats, nullptr, kind_str(kind), nullptr};
  if (!cfg.quiet) in.on_epoch = epoch_logger(kind_str(kind) + " teacher");
  log_line(kind_str(kind) + " teacher: " + std::to_string(train.size()) + " train / " + std::to_string(eval.size()) +
           " eval samples, " + std::to_string(tc.epochs) + " epochs");
  auto outcome = train_teacher(build_teacher(cfg.teacher), in, tc);
  const auto paths = artifact_paths(cfg);
  save_checkpoint(outcome.checkpoint, paths.teacher_checkpoint(kind));
  write_report_files(paths.teacher_report(kind), outcome.report);
  if (outcome.report.aborted) log_line(kind_str(kind) + " teacher aborted: " + outcome.report.diagnostics);
  return outcome.report;
}

std::size_t cmd_embed(const RunConfig& cfg, SpectrogramKind kind) {
  const auto paths = artifact_paths(cfg);
  const Checkpoint teacher = require_checkpoint(paths.teacher_checkpoint(kind),
                                                "kdasc_cli train_teacher --kinds " + kind_str(kind));
  const DatasetManifest manifest = require_manifest(cfg);
  const FeatureCache cache(cfg.cache_path());
  const FeatureSet train = load_feature_set(cache, manifest, kind, Split::Train, teacher.standardization);
  const EmbeddingStore store = extract_all_embeddings(teacher, train, cfg.eval_batch_size);
  save_embeddings(store, paths.embeddings(kind));
  log_line(kind_str(kind) + ": stored " + std::to_string(store.size()) + " teacher embeddings");
  return store.size();
}

TrainReport cmd_train_student(const RunConfig& cfg, SpectrogramKind kind, StudentVariant variant) {
  cfg.validate();
  const auto paths = artifact_paths(cfg);
  const DatasetManifest manifest = require_manifest(cfg);
  const FeatureCache cache(cfg.cache_path());
  const ChannelStats stats = require_stats(cache, kind);
  TrainConfig tc = cfg.student_train;
  tc.seed = mix_seed(cfg.kind_seed(kind), 2);
  if (variant == StudentVariant::Plain) tc.loss_weights.mse = 0.0;
  std::optional<EmbeddingStore> store;
  if (variant == StudentVariant::Distilled && tc.loss_weights.mse > 0.0) {
    if (!fs::exists(paths.embeddings(kind))) {
      throw MissingPrerequisiteError("teacher embeddings " + paths.embeddings(kind).string() +
                                     " not found; run `kdasc_cli embed --kinds " + kind_str(kind) + "` first");
    }
    store = load_embeddings(paths.embeddings(kind));
  }
  const FeatureSet train = load_feature_set(cache, manifest, kind, Split::Train, stats);
  const FeatureSet eval = load_feature_set(cache, manifest, kind, Split::Eval, stats);
  std::vector<std::array<float, kEmbeddingDim>> targets;
  if (store) targets = aligned_targets(*store, train);
  const std::string label = system_name(kind, variant);
  TrainInputs in{&train, &eval, stats, store ? &targets : nullptr, kind_str(kind), nullptr};
  if (!cfg.quiet) in.on_epoch = epoch_logger(label + " student");
  log_line(label + " student: " + std::to_string(tc.epochs) + " epochs, loss weights " +
           format_double(tc.loss_weights.ce) + ":" + format_double(tc.loss_weights.mse));
  auto outcome = train_student(build_student(), in, tc);
  save_checkpoint(outcome.checkpoint, paths.student_checkpoint(kind, variant));
  write_report_files(paths.student_report(kind, variant), outcome.report);
  if (outcome.report.aborted) log_line(label + " student aborted: " + outcome.report.diagnostics);
  return outcome.report;
}

double student_memory_kb() {
  return static_cast<double>(audit(build_student(), MacConvention::ConvFc).total_bytes) / 1000.0;
}
double student_macs_m() {
  return static_cast<double>(audit(build_student(), MacConvention::ConvFc).total_macs) / 1e6;
}

SystemMetrics cmd_evaluate(const RunConfig& cfg, SpectrogramKind kind, StudentVariant variant) {
  const auto paths = artifact_paths(cfg);
  const Checkpoint ckpt = require_checkpoint(paths.student_checkpoint(kind, variant), student_cmd(kind, variant));
  const DatasetManifest manifest = require_manifest(cfg);
  std::vector<std::size_t> labels;
  std::vector<std::string> ids;
  const auto posts = eval_posteriors(cfg, manifest, ckpt, kind, labels, ids);
  SystemMetrics m = evaluate_posteriors(system_name(kind, variant), posts, labels, manifest.class_names);
  m.memory_kb = student_memory_kb();
  m.macs_m = student_macs_m();
  for (const auto& w : m.warnings) log_line("warning: " + w);
  write_text_file(paths.system_metrics(system_file_stem(kind_str(kind), variant)),
                  format_metrics_tsv(compare_systems({m})));
  return m;
}

SystemMetrics cmd_fuse_eval(const RunConfig& cfg, StudentVariant variant) {
  const auto paths = artifact_paths(cfg);
  const DatasetManifest manifest = require_manifest(cfg);
  std::vector<std::vector<ClassPosterior>> per_model;
  std::vector<std::size_t> labels;
  std::vector<std::string> ids;
  for (auto kind : cfg.kinds) {
    const Checkpoint ckpt = require_checkpoint(paths.student_checkpoint(kind, variant), student_cmd(kind, variant));
    std::vector<std::size_t> l;
    std::vector<std::string> i;
    per_model.push_back(eval_posteriors(cfg, manifest, ckpt, kind, l, i));
    if (ids.empty()) {
      labels = l;
      ids = i;
    } else if (i != ids) {
      throw ValidationError("evaluation samples differ between spectrogram kinds");
    }
  }
  std::vector<FusionResult> fused;
  for (std::size_t s = 0; s < ids.size(); ++s) {
    std::vector<ClassPosterior> posts;
    for (const auto& m : per_model) posts.push_back(m[s]);
    fused.push_back(prod_fuse(posts));
  }
  SystemMetrics m = evaluate_fused(ensemble_name(variant), fused, labels, manifest.class_names);
  m.memory_kb = student_memory_kb() * static_cast<double>(cfg.kinds.size());
  m.macs_m = student_macs_m() * static_cast<double>(cfg.kinds.size());
  for (const auto& w : m.warnings) log_line("warning: " + w);
  write_text_file(paths.system_metrics(system_file_stem("ENS", variant)), format_metrics_tsv(compare_systems({m})));
  return m;
}

AuditOutput cmd_audit(const RunConfig& cfg, const std::string& model, MacConvention convention) {
  AuditOutput out;
  if (model == "student" || model == "ensemble") {
    const auto r = audit(build_student(), convention);
    out.table = format_audit_tsv(r);
    if (model == "ensemble") {
      const std::vector<ComplexityReport> members(3, r);
      const auto v = check_budgets(members);
      out.verdict = verdict_line(v);
      out.fits = v.fits();
    } else {
      const auto v = check_budgets(r);
      out.verdict = verdict_line(v);
      out.fits = v.fits();
    }
  } else if (model == "teacher") {
    const auto r = audit(build_teacher(cfg.teacher), convention);
    out.table = format_audit_tsv(r);
    const auto v = check_budgets(r);
    out.verdict = verdict_line(v);
    out.fits = v.fits();
  } else {
    throw ConfigError("audit: unknown model '" + model + "' (expected student, ensemble or teacher)");
  }
  return out;
}

Comparison cmd_report(const RunConfig& cfg, bool include_reference) {
  const auto paths = artifact_paths(cfg);
  const DatasetManifest manifest = require_manifest(cfg);
  std::vector<SystemMetrics> systems;
  if (include_reference) systems.push_back(dcase_baseline_reference(manifest.class_names));
  // Column order of the published table: CQT, GAM, MEL, then the ensemble.
  std::vector<SpectrogramKind> order;
  for (auto k : {SpectrogramKind::Cqt, SpectrogramKind::Gam, SpectrogramKind::Mel}) {
    if (std::find(cfg.kinds.begin(), cfg.kinds.end(), k) != cfg.kinds.end()) order.push_back(k);
  }
  std::map<std::string, std::size_t> column;
  for (auto variant : {StudentVariant::Plain, StudentVariant::Distilled}) {
    bool all = true;
    for (auto k : order) {
      if (!fs::exists(paths.student_checkpoint(k, variant))) {
        log_line("report: skipping " + system_name(k, variant) + " (no checkpoint)");
        all = false;
        continue;
      }
      column[system_file_stem(kind_str(k), variant)] = systems.size();
      systems.push_back(cmd_evaluate(cfg, k, variant));
    }
    if (all && !order.empty()) {
      column[system_file_stem("ENS", variant)] = systems.size();
      systems.push_back(cmd_fuse_eval(cfg, variant));
    }
  }
  if (systems.size() == (include_reference ? 1u : 0u)) {
    throw MissingPrerequisiteError("no student checkpoints under " + (paths.root / "students").string() +
                                   "; run `kdasc_cli train_student` first");
  }
  std::vector<std::pair<std::size_t, std::size_t>> deltas;
  for (const auto& stem : [&] {
         std::vector<std::string> s;
         for (auto k : order) s.push_back(kind_str(k));
         s.push_back("ENS");
         return s;
       }()) {
    const auto a = column.find(system_file_stem(stem, StudentVariant::Plain));
    const auto b = column.find(system_file_stem(stem, StudentVariant::Distilled));
    if (a != column.end() && b != column.end()) deltas.emplace_back(a->second, b->second);
  }
  Comparison cmp = compare_systems(std::move(systems), std::move(deltas));
  write_text_file(paths.comparison_tsv(), format_metrics_tsv(cmp));
  write_text_file(paths.comparison_txt(), format_metrics_table(cmp));
  return cmp;
}

bool TrainAllResult::ok() const {
  for (const auto& k : kinds) {
    if (!k.ok) return false;
  }
  return comparison.has_value();
}

TrainAllResult train_all(const RunConfig& cfg) {
  cfg.validate();
  TrainAllResult result;
  result.kinds.resize(cfg.kinds.size());
  auto run_kind = [&](std::size_t i) {
    KindStatus& st = result.kinds[i];
    st.kind = cfg.kinds[i];
    try {
      st.stage = "featurize";
      cmd_featurize(cfg, st.kind);
      st.stage = "train_teacher";
      cmd_train_teacher(cfg, st.kind);
      st.stage = "embed";
      cmd_embed(cfg, st.kind);
      st.stage = "train_student(nodis)";
      cmd_train_student(cfg, st.kind, StudentVariant::Plain);
      st.stage = "train_student(dis)";
      cmd_train_student(cfg, st.kind, StudentVariant::Distilled);
      st.stage = "done";
      st.ok = true;
    } catch (const std::exception& e) {
      st.error = e.what();
      log_line(kind_str(st.kind) + " failed during " + st.stage + ": " + st.error);
    }
  };
  if (cfg.parallel_kinds) {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < cfg.kinds.size(); ++i) threads.emplace_back(run_kind, i);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t i = 0; i < cfg.kinds.size(); ++i) run_kind(i);
  }
  bool all_ok = true;
  for (const auto& k : result.kinds) all_ok = all_ok && k.ok;
  if (all_ok) result.comparison = cmd_report(cfg);
  return result;
}

}  // namespace kdasc
