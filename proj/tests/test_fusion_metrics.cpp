#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fusion_checks.hpp"
#include "kdasc/error.hpp"
#include "kdasc/fusion/fusion.hpp"
#include "kdasc/fusion/metrics.hpp"
#include "kdasc/manifest.hpp"
#include "support.hpp"

namespace kdasc {
namespace {

const std::vector<std::string> kNames{kClassNames.begin(), kClassNames.end()};

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST(Fusion, SingleModelIsIdentity) {
  const std::vector<ClassPosterior> ps{{0.3, 0.7}};
  const auto r = prod_fuse(ps);
  EXPECT_DOUBLE_EQ(r.fused[0], 0.3);
  EXPECT_DOUBLE_EQ(r.fused[1], 0.7);
  EXPECT_EQ(r.predicted_label, 1u);
  EXPECT_EQ(r.num_models, 1u);
}

TEST(Fusion, ThreeUniformPosteriors) {
  const std::vector<ClassPosterior> ps(3, ClassPosterior(10, 0.1));
  const auto r = prod_fuse(ps);
  for (double v : r.fused) EXPECT_NEAR(v, (1.0 / 3.0) * 0.001, 1e-15);
  EXPECT_EQ(r.predicted_label, 0u);
}

TEST(Fusion, TwoModelProduct) {
  const std::vector<ClassPosterior> ps{{0.5, 0.5}, {0.8, 0.2}};
  const auto r = prod_fuse(ps);
  EXPECT_NEAR(r.fused[0], 0.2, 1e-15);
  EXPECT_NEAR(r.fused[1], 0.05, 1e-15);
  EXPECT_EQ(r.predicted_label, 0u);
  const auto n = renormalize(r);
  EXPECT_NEAR(n[0], 0.8, 1e-15);
  EXPECT_NEAR(n[1], 0.2, 1e-15);
}

TEST(Fusion, MatchesDirectProductOracle) {
  const auto r = test::check_fusion_oracle(10000, 41);
  EXPECT_EQ(r.instances, 10000u);
  EXPECT_LT(r.max_rel, 1e-9);
  EXPECT_EQ(r.argmax_mismatches, 0u);
}

TEST(Fusion, OrderInvariance) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ClassPosterior> ps;
    for (int s = 0; s < 4; ++s) ps.push_back(test::random_posterior(rng));
    const auto ref = prod_fuse(ps);
    std::vector<std::size_t> perm{0, 1, 2, 3};
    while (std::next_permutation(perm.begin(), perm.end())) {
      std::vector<ClassPosterior> q;
      for (auto i : perm) q.push_back(ps[i]);
      const auto r = prod_fuse(q);
      EXPECT_EQ(r.predicted_label, ref.predicted_label);
      EXPECT_EQ(r.fused, ref.fused);
    }
  }
}

TEST(Fusion, CopiesOfOnePosteriorKeepItsArgmax) {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = test::random_posterior(rng);
    const std::size_t s = 1 + rng.below(5);
    const std::vector<ClassPosterior> ps(s, p);
    EXPECT_EQ(prod_fuse(ps).predicted_label, decide_label(p));
  }
}

TEST(Fusion, UnderflowStillRenormalizes) {
  // 5 models each giving 1e-80 to every class but the first: direct products underflow.
  ClassPosterior p(10, 1e-80);
  p[3] = 1.0 - 9e-80;
  const std::vector<ClassPosterior> ps(5, p);
  const auto r = prod_fuse(ps);
  EXPECT_EQ(r.predicted_label, 3u);
  const auto n = renormalize(r);
  EXPECT_NEAR(n[3], 1.0, 1e-12);
  double sum = 0.0;
  for (double v : n) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Fusion, InputErrors) {
  EXPECT_THROW(prod_fuse(std::vector<ClassPosterior>{}), ValidationError);
  EXPECT_THROW(prod_fuse(std::vector<ClassPosterior>{{0.5, 0.5}, {1.0}}), ValidationError);
  EXPECT_THROW(prod_fuse(std::vector<ClassPosterior>{{-0.1, 1.1}}), ValidationError);
  EXPECT_THROW(prod_fuse(std::vector<ClassPosterior>{{std::nan(""), 1.0}}), ValidationError);
  EXPECT_THROW(validate_posterior(std::vector<double>{0.4, 0.4}), ValidationError);
  EXPECT_NO_THROW(validate_posterior(std::vector<double>{0.4, 0.6}));
}

TEST(DecideLabel, Examples) {
  EXPECT_EQ(decide_label(std::vector<double>{0, 0, 1, 0}), 2u);
  EXPECT_EQ(decide_label(std::vector<double>(7, 0.25)), 0u);
  EXPECT_THROW(decide_label(std::vector<double>{}), ValidationError);
  EXPECT_THROW(decide_label(std::vector<double>{0.1, std::nan(""), 0.2}), ValidationError);
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = test::random_posterior(rng);
    const double k = std::exp(rng.uniform(-20.0, 20.0));
    std::vector<double> scaled(p);
    for (auto& v : scaled) v *= k;
    EXPECT_EQ(decide_label(scaled), decide_label(p));
  }
}

TEST(Metrics, PerfectClassifier) {
  std::vector<ClassPosterior> ps;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 40; ++i) {
    ClassPosterior p(10, 0.0);
    p[i % 10] = 1.0;
    ps.push_back(p);
    labels.push_back(i % 10);
  }
  const auto m = evaluate_posteriors("perfect", ps, labels, kNames);
  EXPECT_DOUBLE_EQ(m.average_accuracy, 1.0);
  EXPECT_NEAR(m.average_log_loss, -std::log(1.0 - 1e-12), 1e-15);
  for (const auto& c : m.classes) {
    EXPECT_TRUE(c.present);
    EXPECT_EQ(c.count, 4u);
  }
  EXPECT_TRUE(m.warnings.empty());
}

TEST(Metrics, UniformClassifier) {
  std::vector<ClassPosterior> ps(100, ClassPosterior(10, 0.1));
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 100; ++i) labels.push_back(i % 10);
  const auto m = evaluate_posteriors("uniform", ps, labels, kNames);
  // Tiebreak sends every sample to class 0.
  EXPECT_NEAR(m.average_accuracy, 0.1, 1e-12);
  EXPECT_DOUBLE_EQ(m.classes[0].accuracy, 1.0);
  for (const auto& c : m.classes) EXPECT_NEAR(c.log_loss, std::numbers::ln10, 1e-12);
}

TEST(Metrics, ClampAtZeroProbability) {
  EXPECT_NEAR(clamped_nll(0.0), -std::log(1e-12), 1e-9);
  EXPECT_NEAR(clamped_nll(1.0), -std::log(1.0 - 1e-12), 1e-18);
}

TEST(Metrics, HandComputedPerClassValues) {
  // Class 0: two samples, one right (p=0.5), one wrong (p=0.25). Class 1: one right (p=0.8).
  const std::vector<std::size_t> pred{0, 1, 1};
  const std::vector<double> prob{0.5, 0.25, 0.8};
  const std::vector<std::size_t> labels{0, 0, 1};
  const std::vector<std::string> names{"a", "b"};
  const auto m = evaluate_predictions("x", pred, prob, labels, names);
  EXPECT_DOUBLE_EQ(m.classes[0].accuracy, 0.5);
  EXPECT_NEAR(m.classes[0].log_loss, (std::log(2.0) + std::log(4.0)) / 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(m.classes[1].accuracy, 1.0);
  EXPECT_NEAR(m.classes[1].log_loss, -std::log(0.8), 1e-12);
  EXPECT_NEAR(m.average_accuracy, 0.75, 1e-12);
  EXPECT_NEAR(m.average_log_loss, ((std::log(2.0) + std::log(4.0)) / 2.0 - std::log(0.8)) / 2.0, 1e-12);
}

TEST(Metrics, AbsentClassExcludedWithWarning) {
  std::vector<ClassPosterior> ps;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 18; ++i) {
    ClassPosterior p(10, 0.0);
    p[i % 9] = 1.0;
    ps.push_back(p);
    labels.push_back(i % 9);
  }
  const auto m = evaluate_posteriors("nine", ps, labels, kNames);
  EXPECT_FALSE(m.classes[9].present);
  EXPECT_DOUBLE_EQ(m.average_accuracy, 1.0);
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find(kNames[9]), std::string::npos);
  const auto tsv = format_metrics_tsv(compare_systems({m}));
  EXPECT_NE(tsv.find(kNames[9] + "\tabsent\tabsent"), std::string::npos) << tsv;
}

TEST(Metrics, FusedLogLossUsesRenormalizedVector) {
  const std::vector<ClassPosterior> ps{{0.5, 0.5}, {0.8, 0.2}};
  const std::vector<FusionResult> fused{prod_fuse(ps)};
  const std::vector<std::size_t> labels{1};
  const std::vector<std::string> names{"a", "b"};
  const auto m = evaluate_fused("fused", fused, labels, names);
  EXPECT_DOUBLE_EQ(m.classes[1].accuracy, 0.0);
  EXPECT_NEAR(m.classes[1].log_loss, -std::log(0.2), 1e-12);
}

TEST(Metrics, CertainPredictorHasLowestLogLoss) {
  Rng rng(9);
  std::vector<std::size_t> labels;
  std::vector<ClassPosterior> certain, noisy;
  for (std::size_t i = 0; i < 200; ++i) {
    const std::size_t y = rng.below(10);
    labels.push_back(y);
    ClassPosterior p(10, 0.0);
    p[y] = 1.0;
    certain.push_back(p);
    noisy.push_back(test::random_posterior(rng));
  }
  const auto a = evaluate_posteriors("certain", certain, labels, kNames);
  const auto b = evaluate_posteriors("noisy", noisy, labels, kNames);
  EXPECT_LE(a.average_log_loss, b.average_log_loss);
}

TEST(Metrics, CountMismatchIsError) {
  const std::vector<ClassPosterior> ps(3, ClassPosterior(10, 0.1));
  const std::vector<std::size_t> labels{0, 1};
  EXPECT_THROW(evaluate_posteriors("x", ps, labels, kNames), ValidationError);
  const std::vector<std::size_t> bad{0, 1, 12};
  EXPECT_THROW(evaluate_posteriors("x", ps, bad, kNames), ValidationError);
}

TEST(Compare, IdenticalReportsGiveZeroDeltas) {
  std::vector<ClassPosterior> ps;
  std::vector<std::size_t> labels;
  Rng rng(12);
  for (std::size_t i = 0; i < 50; ++i) {
    ps.push_back(test::random_posterior(rng));
    labels.push_back(i % 10);
  }
  const auto m = evaluate_posteriors("sys", ps, labels, kNames);
  const auto cmp = compare_systems({m, m}, {{0, 1}});
  ASSERT_EQ(cmp.deltas.size(), 1u);
  for (const auto& c : cmp.deltas[0].classes) {
    EXPECT_EQ(c.accuracy, 0.0);
    EXPECT_EQ(c.log_loss, 0.0);
  }
  EXPECT_EQ(cmp.deltas[0].average_accuracy, 0.0);
  const auto tsv = lines_of(format_metrics_tsv(cmp));
  // Average row: two systems, then a zero delta printed without a sign.
  EXPECT_NE(tsv[11].find("\t0.0\t0.000"), std::string::npos) << tsv[11];
}

TEST(Compare, DeltaIsToMinusFrom) {
  const std::vector<std::string> names{"a", "b"};
  const std::vector<ReferenceRow> r1{{"a", 40.0, 1.5}, {"b", 60.0, 1.0}};
  const std::vector<ReferenceRow> r2{{"a", 50.0, 1.25}, {"b", 50.0, 1.5}};
  const auto cmp = compare_systems({reference_column("one", r1, names, {}, {}, 10.0, 1.0),
                                    reference_column("two", r2, names, {}, {}, 12.5, 2.0)},
                                   {{0, 1}});
  const auto& d = cmp.deltas[0];
  EXPECT_NEAR(d.classes[0].accuracy, 0.10, 1e-12);
  EXPECT_NEAR(d.classes[0].log_loss, -0.25, 1e-12);
  EXPECT_NEAR(d.classes[1].accuracy, -0.10, 1e-12);
  EXPECT_NEAR(d.average_accuracy, 0.0, 1e-12);
  EXPECT_NEAR(*d.memory_kb, 2.5, 1e-12);
  const auto tsv = format_metrics_tsv(cmp);
  EXPECT_NE(tsv.find("a\t40.0\t1.500\t50.0\t1.250\t+10.0\t-0.250"), std::string::npos) << tsv;
}

TEST(Compare, MismatchedClassSetsRejected) {
  const std::vector<std::string> ab{"a", "b"}, ac{"a", "c"}, abc{"a", "b", "c"};
  const std::vector<ReferenceRow> none;
  const auto x = reference_column("x", none, ab, {}, {}, {}, {});
  EXPECT_THROW(compare_systems({x, reference_column("y", none, ac, {}, {}, {}, {})}), ValidationError);
  EXPECT_THROW(compare_systems({x, reference_column("z", none, abc, {}, {}, {}, {})}), ValidationError);
  EXPECT_THROW(compare_systems({x}, {{0, 3}}), ValidationError);
  EXPECT_THROW(compare_systems({}), ValidationError);
}

TEST(Reference, ChallengeBaselineColumn) {
  const auto m = dcase_baseline_reference(kNames);
  EXPECT_NEAR(100.0 * m.average_accuracy, 42.9, 1e-9);
  EXPECT_NEAR(m.average_log_loss, 1.575, 1e-12);
  for (const auto& c : m.classes) EXPECT_TRUE(c.present) << c.name;
  const auto tsv = format_metrics_tsv(compare_systems({m}));
  EXPECT_NE(tsv.find("Average\t42.9\t1.575"), std::string::npos) << tsv;
}

TEST(Reference, LoadFromTsv) {
  test::TempDir dir;
  {
    std::ofstream out(dir / "ref.tsv");
    out << "class\tacc\tlogloss\n# comment\nairport\t55.5\t1.25\nbus\t60\t1.0\nAverage\t57.4\t1.333\nMemory (KB)\t88.7\n";
  }
  const auto m = load_reference_column("published", dir / "ref.tsv", kNames);
  EXPECT_NEAR(m.average_accuracy, 0.574, 1e-12);
  EXPECT_NEAR(m.average_log_loss, 1.333, 1e-12);
  EXPECT_TRUE(m.classes[0].present);
  EXPECT_FALSE(m.classes[2].present);
  EXPECT_NEAR(*m.memory_kb, 88.7, 1e-12);
  EXPECT_FALSE(m.macs_m.has_value());
  {
    std::ofstream out(dir / "bad.tsv");
    out << "airport\tfast\t1.0\n";
  }
  EXPECT_THROW(load_reference_column("bad", dir / "bad.tsv", kNames), SchemaError);
  {
    std::ofstream out(dir / "unknown.tsv");
    out << "spaceport\t10\t1.0\n";
  }
  EXPECT_THROW(load_reference_column("u", dir / "unknown.tsv", kNames), ValidationError);
}

TEST(Report, TsvLayout) {
  std::vector<ClassPosterior> ps(20, ClassPosterior(10, 0.1));
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 20; ++i) labels.push_back(i % 10);
  auto m = evaluate_posteriors("s", ps, labels, kNames);
  m.memory_kb = 29.16;
  const auto cmp = compare_systems({m, dcase_baseline_reference(kNames)}, {{1, 0}});
  const auto rows = lines_of(format_metrics_tsv(cmp));
  ASSERT_EQ(rows.size(), 1u + 10u + 3u);
  EXPECT_EQ(rows[0].rfind("class\ts acc\ts logloss\t", 0), 0u) << rows[0];
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(rows[1 + k].rfind(kNames[k] + "\t", 0), 0u);
  EXPECT_EQ(rows[11].rfind("Average\t", 0), 0u);
  EXPECT_EQ(rows[12].rfind("Memory (KB)\t29.2", 0), 0u) << rows[12];
  EXPECT_EQ(rows[13].rfind("MACs (M)\t-", 0), 0u) << rows[13];
  for (const auto& r : rows) EXPECT_EQ(std::count(r.begin(), r.end(), '\t'), 6) << r;
  const auto table = lines_of(format_metrics_table(cmp));
  EXPECT_EQ(table.size(), 1u + 1u + 10u + 1u + 3u);
}

}  // namespace
}  // namespace kdasc
