// Command-line entry point: one subcommand per pipeline stage.
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kdasc/audit/complexity.hpp"
#include "kdasc/binary_io.hpp"
#include "kdasc/error.hpp"
#include "kdasc/runtime.hpp"
#include "kdasc/train/pipeline.hpp"

namespace {

using kdasc::RunConfig;
using kdasc::SpectrogramKind;
using kdasc::StudentVariant;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitMissing = 2;
constexpr int kExitValidation = 3;

// Flags collected as key/value overrides, applied after the config file.
struct Overrides {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;
};

void add_value(CLI::App* app, Overrides& o, const std::string& flag, const std::string& key,
               const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&o, key](const std::string& v) { o.flags.emplace_back(key, v); }, help);
}

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("-c,--config", o.config_file, "flat `key = value` config file [implementation choice]");
  app->add_option("--set", o.sets, "override any config key, e.g. --set student_epochs=20 [implementation choice]");
  add_value(app, o, "--work-dir", "work_dir", "output directory for all artifacts [implementation choice]");
  add_value(app, o, "--data-dir", "data_dir", "synthetic dataset root [implementation choice]");
  add_value(app, o, "--manifest", "manifest", "manifest TSV (default <data-dir>/manifest.tsv) [implementation choice]");
  add_value(app, o, "--cache-dir", "cache_dir",
            "feature cache directory; KDASC_CACHE takes precedence [implementation choice]");
  add_value(app, o, "--seed", "seed", "master seed [implementation choice]");
  add_value(app, o, "--kinds", "kinds", "comma list of MEL,GAM,CQT [published setting: three spectrograms]");
  app->add_flag_function(
      "--parallel-kinds", [&o](std::int64_t) { o.flags.emplace_back("parallel_kinds", "true"); },
      "run the spectrogram pipelines concurrently [implementation choice]");
  app->add_flag_function(
      "-q,--quiet", [&o](std::int64_t) { o.flags.emplace_back("quiet", "true"); },
      "suppress per-epoch progress lines [implementation choice]");
}

void add_teacher_flags(CLI::App* app, Overrides& o) {
  add_value(app, o, "--epochs", "teacher_epochs", "teacher epochs (default 100) [implementation choice]");
  add_value(app, o, "--batch-size", "teacher_batch_size", "teacher batch size (default 32) [implementation choice]");
  add_value(app, o, "--lr", "teacher_lr", "Adam learning rate (default 0.001) [published setting: Adam optimizer]");
  add_value(app, o, "--channels", "teacher_channels",
            "residual stage widths (default 32,64,128,256) [implementation choice]");
  add_value(app, o, "--mixup", "mixup", "on/off (default on) [published setting: mixup for teachers]");
  add_value(app, o, "--mixup-alpha", "mixup_alpha", "Beta(alpha, alpha) parameter (default 0.4) [implementation choice]");
  add_value(app, o, "--mixup-lambda", "mixup_lambda", "fixed mixup lambda, or none [implementation choice]");
}

void add_student_flags(CLI::App* app, Overrides& o) {
  add_value(app, o, "--epochs", "student_epochs", "student epochs (default 200) [implementation choice]");
  add_value(app, o, "--batch-size", "student_batch_size", "student batch size (default 32) [implementation choice]");
  add_value(app, o, "--lr", "student_lr", "Adam learning rate (default 0.001) [published setting: Adam optimizer]");
  add_value(app, o, "--w-ce", "w_ce", "cross-entropy weight (default 1) [published setting: 1:1 loss ratio]");
  add_value(app, o, "--w-mse", "w_mse", "embedding MSE weight (default 1) [published setting: 1:1 loss ratio]");
}

RunConfig resolve(const Overrides& o) {
  RunConfig cfg;
  if (!o.config_file.empty()) {
    for (const auto& [k, v] : kdasc::read_config_file(o.config_file)) kdasc::apply_setting(cfg, k, v);
  }
  for (const auto& [k, v] : o.flags) kdasc::apply_setting(cfg, k, v);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw kdasc::ConfigError("--set expects key=value, got '" + s + "'");
    kdasc::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  kdasc::apply_environment(cfg);
  cfg.validate();
  return cfg;
}

StudentVariant parse_variant(const std::string& v) {
  if (v == "dis") return StudentVariant::Distilled;
  if (v == "nodis") return StudentVariant::Plain;
  throw kdasc::ConfigError("--variant must be dis or nodis, got '" + v + "'");
}

std::vector<StudentVariant> variants_for(const std::string& v) {
  if (v == "both") return {StudentVariant::Plain, StudentVariant::Distilled};
  return {parse_variant(v)};
}

void print_summary_line(const kdasc::SystemMetrics& m) {
  std::cout << m.name << "\taverage_acc=" << kdasc::format_fixed(100.0 * m.average_accuracy, 1)
            << "\taverage_logloss=" << kdasc::format_fixed(m.average_log_loss, 3) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  kdasc::configure_runtime();
  CLI::App app{"Teacher-student acoustic scene classification toolkit"};
  app.require_subcommand(1);
  app.footer(kdasc::describe_config_keys() +
             "\nExit codes: 0 success, 1 runtime failure, 2 missing prerequisite, 3 invalid input or config.");

  Overrides o;
  std::string variant = "both";
  std::string model = "student";
  std::string convention = "CONV_FC";
  bool no_reference = false;
  std::string reference_tsv;

  auto* synth = app.add_subcommand("synth", "generate the synthetic 10-class dataset");
  add_common(synth, o);
  add_value(synth, o, "--clips-per-class", "clips_per_class", "clips per class (default 100) [implementation choice]");

  auto* featurize = app.add_subcommand("featurize", "compute and cache spectrogram features (idempotent)");
  add_common(featurize, o);

  auto* teacher = app.add_subcommand("train_teacher", "phase I: train one teacher per kind with mixup");
  add_common(teacher, o);
  add_teacher_flags(teacher, o);

  auto* embed = app.add_subcommand("embed", "extract teacher embeddings for the TRAIN split");
  add_common(embed, o);

  auto* student = app.add_subcommand("train_student", "phase II: train students (CE + embedding MSE)");
  add_common(student, o);
  add_student_flags(student, o);
  student->add_option("--variant", variant, "dis, nodis or both (default both) [implementation choice]");

  auto* evaluate = app.add_subcommand("evaluate", "per-class accuracy and log loss of single students");
  add_common(evaluate, o);
  evaluate->add_option("--variant", variant, "dis, nodis or both [implementation choice]");

  auto* fuse = app.add_subcommand("fuse_eval", "product-fused evaluation of the three students");
  add_common(fuse, o);
  fuse->add_option("--variant", variant, "dis, nodis or both [implementation choice]");

  auto* audit = app.add_subcommand("audit", "parameter, byte and MAC audit against the 128 KB / 30 M budgets");
  add_common(audit, o);
  add_value(audit, o, "--channels", "teacher_channels", "teacher stage widths for --model teacher [implementation choice]");
  audit->add_option("--model", model, "student, ensemble or teacher (default student) [published setting: budgets]");
  audit->add_option("--convention", convention,
                    "CONV_FC (conv + dense) or EXTENDED (also BN and pooling) [implementation choice]");

  auto* report = app.add_subcommand("report", "9-column comparison table with distillation deltas");
  add_common(report, o);
  report->add_flag("--no-reference", no_reference, "omit the published baseline column [implementation choice]");
  report->add_option("--reference-tsv", reference_tsv,
                     "extra reference column from a class/acc/logloss TSV [implementation choice]");

  auto* all = app.add_subcommand("train_all", "featurize, both phases and the report for every kind");
  add_common(all, o);
  add_value(all, o, "--teacher-epochs", "teacher_epochs", "teacher epochs [implementation choice]");
  add_value(all, o, "--student-epochs", "student_epochs", "student epochs [implementation choice]");
  add_value(all, o, "--teacher-channels", "teacher_channels", "teacher stage widths [implementation choice]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    const RunConfig cfg = resolve(o);
    if (synth->parsed()) {
      const auto m = kdasc::cmd_synth(cfg);
      std::cout << "wrote " << m.entries.size() << " clips and " << cfg.manifest_path().string() << "\n";
    } else if (featurize->parsed()) {
      for (auto k : cfg.kinds) {
        const auto s = kdasc::cmd_featurize(cfg, k);
        std::cout << kdasc::to_string(k) << "\tcomputed=" << s.computed << "\tcached=" << s.cached << "\n";
      }
    } else if (teacher->parsed()) {
      for (auto k : cfg.kinds) {
        const auto r = kdasc::cmd_train_teacher(cfg, k);
        std::cout << kdasc::to_string(k) << " teacher\n" << kdasc::format_train_report(r);
        if (r.aborted) return kExitRuntime;
      }
    } else if (embed->parsed()) {
      for (auto k : cfg.kinds) {
        std::cout << kdasc::to_string(k) << "\tembeddings=" << kdasc::cmd_embed(cfg, k) << "\n";
      }
    } else if (student->parsed()) {
      for (auto k : cfg.kinds) {
        for (auto v : variants_for(variant)) {
          const auto r = kdasc::cmd_train_student(cfg, k, v);
          std::cout << kdasc::to_string(k) << " student (" << kdasc::to_string(v) << ")\n"
                    << kdasc::format_train_report(r);
          if (r.aborted) return kExitRuntime;
        }
      }
    } else if (evaluate->parsed()) {
      for (auto v : variants_for(variant)) {
        for (auto k : cfg.kinds) {
          const auto m = kdasc::cmd_evaluate(cfg, k, v);
          std::cout << kdasc::format_metrics_table(kdasc::compare_systems({m})) << "\n";
        }
      }
    } else if (fuse->parsed()) {
      for (auto v : variants_for(variant)) {
        const auto m = kdasc::cmd_fuse_eval(cfg, v);
        std::cout << kdasc::format_metrics_table(kdasc::compare_systems({m})) << "\n";
        print_summary_line(m);
      }
      std::cout << "note: fused log loss uses the product vector renormalized to sum 1\n";
    } else if (audit->parsed()) {
      kdasc::MacConvention conv;
      if (convention == "CONV_FC") {
        conv = kdasc::MacConvention::ConvFc;
      } else if (convention == "EXTENDED") {
        conv = kdasc::MacConvention::Extended;
      } else {
        throw kdasc::ConfigError("--convention must be CONV_FC or EXTENDED");
      }
      const auto out = kdasc::cmd_audit(cfg, model, conv);
      std::cout << out.table << out.verdict << "\n";
      if (model != "teacher") std::cout << "\n" << kdasc::format_reconciliation(kdasc::build_student());
    } else if (report->parsed()) {
      auto cmp = kdasc::cmd_report(cfg, !no_reference);
      if (!reference_tsv.empty()) {
        std::vector<std::string> names;
        for (const auto& c : cmp.systems.front().classes) names.push_back(c.name);
        auto systems = cmp.systems;
        systems.insert(systems.begin(), kdasc::load_reference_column("reference", reference_tsv, names));
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (const auto& [a, b] : cmp.delta_pairs) pairs.emplace_back(a + 1, b + 1);
        cmp = kdasc::compare_systems(std::move(systems), std::move(pairs));
      }
      std::cout << kdasc::format_metrics_table(cmp);
      std::cout << "note: fused log loss uses the product vector renormalized to sum 1\n";
    } else if (all->parsed()) {
      const auto result = kdasc::train_all(cfg);
      for (const auto& k : result.kinds) {
        std::cout << kdasc::to_string(k.kind) << "\t" << (k.ok ? "ok" : "FAILED at " + k.stage + ": " + k.error)
                  << "\n";
      }
      if (result.comparison) std::cout << kdasc::format_metrics_table(*result.comparison);
      if (!result.ok()) return kExitRuntime;
    }
    return kExitOk;
  } catch (const kdasc::MissingPrerequisiteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissing;
  } catch (const kdasc::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
