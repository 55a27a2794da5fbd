#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numbers>

#include "gradient_suite.hpp"
#include "kdasc/nn/layers.hpp"
#include "kdasc/nn/loss.hpp"
#include "kdasc/nn/mixup.hpp"
#include "kdasc/nn/optim.hpp"
#include "support.hpp"

using namespace kdasc;
using namespace kdasc::nn;
using kdasc::test::random_tensor;

namespace {

const ForwardContext kTrain{Mode::Train, nullptr};

std::vector<double> as_double(const Tensor<float>& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(GradientSuite, EveryOperationPassesCentralDifferences) {
  const auto cases = test::run_gradient_suite();
  std::map<std::string, int> shapes_per_op;
  for (const auto& c : cases) {
    EXPECT_TRUE(c.passed()) << c.op << " " << c.shape << " max_rel=" << c.result.max_rel << " worst "
                            << c.result.worst << " checked=" << c.result.checked;
    ++shapes_per_op[c.op.substr(0, c.op.find(' '))];
  }
  for (const char* op : {"conv2d", "batchnorm", "relu", "avgpool", "globalavgpool", "dropout", "dense", "softmax",
                         "residual", "cross_entropy", "mse"}) {
    EXPECT_GE(shapes_per_op[op], 3) << op;
  }
}

TEST(GradientSuite, WholeStudentNetworkWithBothLossHeads) {
  for (const auto& c : test::run_network_gradient_checks()) {
    EXPECT_TRUE(c.passed()) << c.shape << " max_rel=" << c.result.max_rel << " worst " << c.result.worst;
    EXPECT_LT(c.result.skipped_kinks * 4, c.result.checked) << c.shape;
  }
}

TEST(Conv2D, OneByOneIdentityKernelCopiesInput) {
  Conv2D<float> conv("c", 3, 3, 1, 1);
  auto& w = conv.weight().value;
  w.fill(0.0f);
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0f;
  Rng rng(1);
  const auto x = random_tensor<float>({2, 4, 5, 3}, rng);
  EXPECT_EQ(conv.forward(x, kTrain), x);
}

TEST(Conv2D, AllOnesKernelCountsNeighbours) {
  Conv2D<float> conv("c", 1, 1, 3, 3);
  conv.weight().value.fill(1.0f);
  const Tensor<float> x({1, 5, 5, 1}, 1.0f);
  const auto y = conv.forward(x, kTrain);
  EXPECT_FLOAT_EQ(y[2 * 5 + 2], 9.0f);
  EXPECT_FLOAT_EQ(y[0], 4.0f);
  EXPECT_FLOAT_EQ(y[24], 4.0f);
  EXPECT_FLOAT_EQ(y[2], 6.0f);
}

TEST(Conv2D, MatchesNaiveLoopOnRandomInput) {
  Rng rng(2);
  Conv2D<float> conv("c", 2, 3, 2, 2);
  conv.init(rng);
  for (auto& b : conv.bias().value.values()) b = static_cast<float>(rng.uniform(-1, 1));
  const auto x = random_tensor<float>({1, 6, 6, 2}, rng);
  const auto y = conv.forward(x, kTrain);
  const auto ref = test::naive_conv(as_double(x), 1, 6, 6, 2, as_double(conv.weight().value), 2, 2, 3,
                                    as_double(conv.bias().value));
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
}

TEST(Conv2D, MatchesNaiveLoopAcrossSmallShapeSweep) {
  Rng rng(3);
  const std::size_t extents[] = {1, 2, 3, 5, 8};
  std::size_t cases = 0;
  for (std::size_t h : extents)
    for (std::size_t w : extents)
      for (std::size_t kh : extents)
        for (std::size_t kw : extents)
          for (std::size_t cin : {1, 3})
            for (std::size_t cout : {1, 3}) {
              Conv2D<double> conv("c", cin, cout, kh, kw);
              conv.init(rng);
              for (auto& b : conv.bias().value.values()) b = rng.uniform(-1, 1);
              const auto x = random_tensor<double>({2, h, w, cin}, rng);
              const auto y = conv.forward(x, kTrain);
              const auto ref = test::naive_conv(x.storage(), 2, h, w, cin, conv.weight().value.storage(), kh, kw,
                                                cout, conv.bias().value.storage());
              double worst = 0.0;
              for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(y[i] - ref[i]));
              ASSERT_LT(worst, 1e-12) << h << "x" << w << " kernel " << kh << "x" << kw << " " << cin << "->" << cout;
              ++cases;
            }
  EXPECT_EQ(cases, 2500u);
}

TEST(Conv2D, ZeroUpstreamGradientGivesZeroGradients) {
  Rng rng(4);
  Conv2D<double> conv("c", 2, 3, 3, 3);
  conv.init(rng);
  const auto x = random_tensor<double>({2, 4, 4, 2}, rng);
  conv.forward(x, kTrain);
  const auto gx = conv.backward(Tensor<double>({2, 4, 4, 3}));
  for (double v : gx.values()) EXPECT_EQ(v, 0.0);
  for (double v : conv.weight().grad.values()) EXPECT_EQ(v, 0.0);
  for (double v : conv.bias().grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2D, GradientIsLinearInUpstream) {
  Rng rng(5);
  Conv2D<double> conv("c", 2, 2, 2, 2);
  conv.init(rng);
  const auto x = random_tensor<double>({1, 3, 3, 2}, rng);
  const auto g1 = random_tensor<double>({1, 3, 3, 2}, rng);
  const auto g2 = random_tensor<double>({1, 3, 3, 2}, rng);
  const double a = 0.7, b = -1.3;
  Tensor<double> mix(g1.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * g1[i] + b * g2[i];

  auto grads = [&](const Tensor<double>& g) {
    conv.weight().grad.fill(0.0);
    conv.bias().grad.fill(0.0);
    conv.forward(x, kTrain);
    auto gx = conv.backward(g);
    return std::make_pair(gx, conv.weight().grad);
  };
  const auto [x1, w1] = grads(g1);
  const auto [x2, w2] = grads(g2);
  const auto [xm, wm] = grads(mix);
  for (std::size_t i = 0; i < xm.size(); ++i) EXPECT_NEAR(xm[i], a * x1[i] + b * x2[i], 1e-12);
  for (std::size_t i = 0; i < wm.size(); ++i) EXPECT_NEAR(wm[i], a * w1[i] + b * w2[i], 1e-12);
}

TEST(Conv2D, BackwardWithoutForwardIsStateError) {
  Conv2D<float> conv("c", 1, 1, 2, 2);
  EXPECT_THROW(conv.backward(Tensor<float>({1, 2, 2, 1})), StateError);
}

TEST(Conv2D, WrongChannelCountIsShapeError) {
  Conv2D<float> conv("c", 3, 2, 2, 2);
  EXPECT_THROW(conv.forward(Tensor<float>({1, 4, 4, 2}), kTrain), ShapeError);
}

TEST(BatchNorm, NormalizedBatchPassesThrough) {
  BatchNorm<double> bn("bn", 2);
  // Per channel: values {-1, 1} repeated, mean 0 and biased variance 1.
  const Tensor<double> x({4, 2}, std::vector<double>{-1, 1, 1, -1, -1, 1, 1, -1});
  const auto y = bn.forward(x, kTrain);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(BatchNorm, TrainModeOutputIsStandardized) {
  Rng rng(6);
  BatchNorm<double> bn("bn", 3);
  const auto x = random_tensor<double>({5, 4, 4, 3}, rng, -3.0, 7.0);
  const auto y = bn.forward(x, kTrain);
  const std::size_t m = x.size() / 3;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += y[i * 3 + c];
    mean /= static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) var += (y[i * 3 + c] - mean) * (y[i * 3 + c] - mean);
    var /= static_cast<double>(m);
    EXPECT_NEAR(mean, 0.0, 1e-4);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(BatchNorm, RunningStatisticsUseMomentum) {
  BatchNorm<double> bn("bn", 1);
  const Tensor<double> x({2, 1}, std::vector<double>{1.0, 3.0});
  bn.forward(x, kTrain);
  EXPECT_NEAR(bn.running_mean()[0], 0.9 * 0.0 + 0.1 * 2.0, 1e-15);
  EXPECT_NEAR(bn.running_var()[0], 0.9 * 1.0 + 0.1 * 1.0, 1e-15);
}

TEST(BatchNorm, EvalBeforeAnyTrainingStepIsStateError) {
  BatchNorm<float> bn("bn", 2);
  EXPECT_THROW(bn.forward(Tensor<float>({1, 2}), ForwardContext{Mode::Eval, nullptr}), StateError);
}

TEST(Pooling, ConstantInputGivesConstantOutput) {
  AvgPool<float> pool("p", 2, 2);
  GlobalAvgPool<float> gap("g");
  const Tensor<float> x({2, 4, 4, 3}, 1.25f);
  const auto pooled = pool.forward(x, kTrain);
  const auto global = gap.forward(x, kTrain);
  for (float v : pooled.values()) EXPECT_FLOAT_EQ(v, 1.25f);
  for (float v : global.values()) EXPECT_FLOAT_EQ(v, 1.25f);
}

TEST(Pooling, GlobalAverageOfOneToFour) {
  GlobalAvgPool<double> gap("g");
  const auto y = gap.forward(Tensor<double>({1, 2, 2, 1}, std::vector<double>{1, 2, 3, 4}), kTrain);
  EXPECT_EQ(y.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 2.5);
}

TEST(Pooling, BackwardSpreadsGradientEvenly) {
  AvgPool<double> pool("p", 2, 3);
  pool.forward(Tensor<double>({1, 4, 6, 1}), kTrain);
  const auto gp = pool.backward(Tensor<double>({1, 2, 2, 1}, 1.0));
  for (double v : gp.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 6.0);
  GlobalAvgPool<double> gap("g");
  gap.forward(Tensor<double>({1, 2, 5, 2}), kTrain);
  const auto gg = gap.backward(Tensor<double>({1, 2}, 1.0));
  for (double v : gg.values()) EXPECT_DOUBLE_EQ(v, 0.1);
}

TEST(Pooling, IndivisibleExtentIsShapeError) {
  AvgPool<float> pool("p", 2, 2);
  EXPECT_THROW(pool.forward(Tensor<float>({1, 5, 4, 1}), kTrain), ShapeError);
}

TEST(Softmax, UniformLogitsGiveUniformPosterior) {
  Softmax<double> sm("s");
  const auto y = sm.forward(Tensor<double>({1, 10}, 3.7), kTrain);
  for (double v : y.values()) EXPECT_NEAR(v, 0.1, 1e-15);
}

TEST(Softmax, RowsSumToOneForWideLogits) {
  Rng rng(7);
  Softmax<float> sm("s");
  const auto y = sm.forward(random_tensor<float>({50, 10}, rng, -50.0, 50.0), kTrain);
  ASSERT_TRUE(y.all_finite());
  for (std::size_t b = 0; b < 50; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < 10; ++k) {
      EXPECT_GE(y[b * 10 + k], 0.0f);
      s += y[b * 10 + k];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Dropout, InvertedScalingPreservesExpectation) {
  Dropout<double> drop("d", 0.3);
  Rng rng(8);
  const ForwardContext ctx{Mode::Train, &rng};
  const Tensor<double> x({1, 4}, std::vector<double>{0.5, -1.0, 2.0, 3.0});
  std::vector<double> sum(4, 0.0);
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    const auto y = drop.forward(x, ctx);
    for (std::size_t i = 0; i < 4; ++i) sum[i] += y[i];
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(sum[i] / trials, x[i], 0.01 * std::abs(x[i]));
}

TEST(Dropout, EvalModeIsIdentityAndTrainNeedsGenerator) {
  Dropout<float> drop("d", 0.5);
  Rng rng(9);
  const auto x = random_tensor<float>({3, 5}, rng);
  EXPECT_EQ(drop.forward(x, ForwardContext{Mode::Eval, nullptr}), x);
  EXPECT_THROW(drop.forward(x, ForwardContext{Mode::Train, nullptr}), StateError);
  EXPECT_THROW(Dropout<float>("bad", 1.0), ValidationError);
}

TEST(Dense, MatchesNaiveProduct) {
  Rng rng(10);
  Dense<float> dense("fc", 12, 5);
  dense.init(rng);
  for (auto& b : dense.bias().value.values()) b = static_cast<float>(rng.uniform(-1, 1));
  const auto x = random_tensor<float>({3, 2, 2, 3}, rng);
  const auto y = dense.forward(x, kTrain);
  ASSERT_EQ(y.shape(), (Shape{3, 5}));
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t o = 0; o < 5; ++o) {
      double s = dense.bias().value[o];
      for (std::size_t i = 0; i < 12; ++i) s += static_cast<double>(x[b * 12 + i]) * dense.weight().value[i * 5 + o];
      EXPECT_NEAR(y[b * 5 + o], s, 1e-5);
    }
  EXPECT_THROW(dense.forward(Tensor<float>({3, 11}), kTrain), ShapeError);
}

TEST(CrossEntropy, ClosedFormValues) {
  Tensor<double> target({1, 10});
  target[3] = 1.0;
  Tensor<double> perfect({1, 10});
  perfect[3] = 1.0;
  EXPECT_DOUBLE_EQ(cross_entropy(perfect, target).value, 0.0);
  EXPECT_NEAR(cross_entropy(Tensor<double>({1, 10}, 0.1), target).value, std::log(10.0), 1e-12);
  EXPECT_NEAR(std::log(10.0), 2.302585, 1e-6);
}

TEST(CrossEntropy, MixedTargetIsLinear) {
  Rng rng(11);
  Tensor<double> pred = random_tensor<double>({1, 10}, rng, 0.01, 1.0);
  double s = 0.0;
  for (double v : pred.values()) s += v;
  for (auto& v : pred.values()) v /= s;
  Tensor<double> t1({1, 10}), t2({1, 10}), mixed({1, 10});
  t1[2] = 1.0;
  t2[7] = 1.0;
  mixed[2] = 0.3;
  mixed[7] = 0.7;
  EXPECT_NEAR(cross_entropy(pred, mixed).value,
              0.3 * cross_entropy(pred, t1).value + 0.7 * cross_entropy(pred, t2).value, 1e-12);
}

TEST(CrossEntropy, OffSimplexTargetIsValidationError) {
  Tensor<double> t({1, 3}, std::vector<double>{0.5, 0.5, 0.1});
  EXPECT_THROW(cross_entropy(Tensor<double>({1, 3}, 1.0 / 3), t), ValidationError);
  EXPECT_THROW(cross_entropy(Tensor<double>({1, 4}), Tensor<double>({1, 3})), ShapeError);
}

TEST(Mse, ClosedFormValues) {
  Rng rng(12);
  const auto p = random_tensor<double>({3, 64}, rng);
  EXPECT_DOUBLE_EQ(mse(p, p).value, 0.0);
  Tensor<double> shifted = p;
  for (auto& v : shifted.values()) v -= 2.0;
  const auto r = mse(p, shifted);
  EXPECT_NEAR(r.value, 4.0, 1e-12);
  for (double g : r.grad.values()) EXPECT_NEAR(g, 2.0 * 2.0 / (3.0 * 64.0), 1e-15);
  EXPECT_THROW(mse(Tensor<double>({2, 3}), Tensor<double>({3, 2})), ShapeError);
}

TEST(Mixup, EndpointsAndSymmetry) {
  const std::vector<float> x1{1.0f, -2.0f, 3.0f}, x2{-1.0f, 2.0f, -3.0f};
  const std::vector<double> y1{1, 0, 0}, y2{0, 0, 1};
  const auto one = mixup<float>({1.0, x1, x2, y1, y2});
  EXPECT_EQ(one.input, x1);
  EXPECT_EQ(one.target, y1);
  const auto half = mixup<float>({0.5, x1, x2, y1, y2});
  for (float v : half.input) EXPECT_EQ(v, 0.0f);
  EXPECT_EQ(half.target, (std::vector<double>{0.5, 0.0, 0.5}));
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const auto m = mixup<float>({rng.uniform(), x1, x2, y1, y2});
    EXPECT_NEAR(m.target[0] + m.target[1] + m.target[2], 1.0, 1e-15);
  }
  EXPECT_THROW(mixup<float>({1.5, x1, x2, y1, y2}), ValidationError);
  EXPECT_THROW(mixup<float>({-0.1, x1, x2, y1, y2}), ValidationError);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter<double> p("p", {5});
  for (std::size_t i = 0; i < 5; ++i) p.value[i] = static_cast<double>(i) - 2.0;
  const auto before = p.value;
  Adam<double> adam;
  for (int s = 0; s < 100; ++s) adam.step({&p});
  EXPECT_EQ(p.value, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter<double> p("p", {4});
  const std::vector<double> g{3.0, -0.01, 250.0, -7.5};
  for (std::size_t i = 0; i < 4; ++i) p.grad[i] = g[i];
  Adam<double> adam(AdamConfig{0.01});
  adam.step({&p});
  for (std::size_t i = 0; i < 4; ++i) {
    // |delta| = lr * |g| / (|g| + eps)
    EXPECT_NEAR(p.value[i], -0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
    EXPECT_NEAR(std::abs(p.value[i]), 0.01, 1e-8);
  }
}

TEST(Adam, ConvergesOnQuadraticBowl) {
  for (const std::vector<double>& w0 : {std::vector<double>{1.0, 0.0, 0.0}, std::vector<double>{0.6, 0.8},
                                        std::vector<double>{0.5, 0.5, 0.5, 0.5}}) {
    Parameter<double> p("w", {w0.size()});
    p.value = Tensor<double>({w0.size()}, w0);
    Adam<double> adam(AdamConfig{0.05});
    for (int s = 0; s < 500; ++s) {
      for (std::size_t i = 0; i < w0.size(); ++i) p.grad[i] = 2.0 * p.value[i];
      adam.step({&p});
    }
    double norm = 0.0;
    for (double v : p.value.values()) norm += v * v;
    EXPECT_LT(std::sqrt(norm), 1e-3);
  }
}

TEST(Adam, NonFiniteGradientNamesParameterAndStep) {
  Parameter<float> a("layer_a.weight", {2}), b("layer_b.bias", {2});
  Adam<float> adam;
  adam.step({&a, &b});
  b.grad[1] = std::numeric_limits<float>::quiet_NaN();
  try {
    adam.step({&a, &b});
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("layer_b.bias"), std::string::npos) << what;
    EXPECT_NE(what.find("step 2"), std::string::npos) << what;
  }
}

TEST(Determinism, IdenticalSeedsGiveBitIdenticalParameters) {
  auto train = [] {
    ModelSpec spec = build_student();
    spec.input_shape = {16, 16, 3};
    Network<float> net(spec, 99);
    Adam<float> adam;
    Rng data(5);
    const auto params = net.parameters();
    for (int step = 0; step < 5; ++step) {
      const auto x = random_tensor<float>({4, 16, 16, 3}, data);
      Tensor<float> t({4, 10});
      for (std::size_t b = 0; b < 4; ++b) t[b * 10 + data.below(10)] = 1.0f;
      net.zero_grad();
      const auto y = net.forward(x, Mode::Train);
      net.backward(cross_entropy(y, t).grad);
      adam.step(params);
    }
    std::vector<float> flat;
    for (auto* p : params) flat.insert(flat.end(), p->value.values().begin(), p->value.values().end());
    return flat;
  };
  const auto a = train();
  const auto b = train();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(float)));
}
