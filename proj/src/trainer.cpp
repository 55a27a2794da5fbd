#include "kdasc/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "kdasc/binary_io.hpp"
#include "kdasc/error.hpp"
#include "kdasc/fusion/metrics.hpp"
#include "kdasc/nn/loss.hpp"
#include "kdasc/nn/mixup.hpp"
#include "kdasc/rng.hpp"

namespace kdasc {
namespace {

enum class Phase { Teacher, Student };

// Independent streams so that, e.g., enabling mixup leaves shuffling and
// dropout untouched.
constexpr std::uint64_t kInitStream = 100;
constexpr std::uint64_t kShuffleStream = 101;
constexpr std::uint64_t kMixupStream = 102;

struct EvalResult {
  double accuracy = 0.0;
  double log_loss = 0.0;
};

EvalResult evaluate_set(Network<float>& net, const FeatureSet& set, std::size_t batch_size) {
  const auto posts = predict_posteriors(net, set, batch_size);
  std::size_t correct = 0;
  double nll = 0.0;
  for (std::size_t i = 0; i < posts.size(); ++i) {
    if (decide_label(posts[i]) == set.labels[i]) ++correct;
    nll += clamped_nll(posts[i][set.labels[i]]);
  }
  const double n = static_cast<double>(std::max<std::size_t>(posts.size(), 1));
  return {static_cast<double>(correct) / n, nll / n};
}

bool better(const EpochRecord& a, const EpochRecord& best) {
  if (a.eval_acc != best.eval_acc) return a.eval_acc > best.eval_acc;
  return a.eval_logloss < best.eval_logloss;
}

nlohmann::json checkpoint_config(const TrainConfig& c, Phase phase, const std::string& kind) {
  nlohmann::json j = to_json(c);
  j["role"] = phase == Phase::Teacher ? "teacher" : "student";
  j["kind"] = kind;
  return j;
}

TrainOutcome run_training(const ModelSpec& spec, const TrainInputs& in, const TrainConfig& config, Phase phase) {
  config.validate();
  if (in.train == nullptr || in.train->size() == 0) throw EmptyInputError("training set is empty");
  const FeatureSet& train = *in.train;
  const bool distill = phase == Phase::Student && config.loss_weights.mse > 0.0;
  if (phase == Phase::Student && config.mixup.enabled) {
    throw ConfigError("mixup is not applied when training students");
  }
  if (distill && in.targets == nullptr) {
    throw MissingPrerequisiteError("student distillation needs teacher embeddings for every training sample");
  }
  if (in.targets != nullptr && in.targets->size() != train.size()) {
    throw MissingPrerequisiteError("teacher embeddings cover " + std::to_string(in.targets->size()) + " of " +
                                   std::to_string(train.size()) + " training samples");
  }

  const auto t0 = std::chrono::steady_clock::now();
  Network<float> net(spec, mix_seed(config.seed, kInitStream));
  nn::Adam<float> adam(config.adam());
  Rng shuffle_rng(mix_seed(config.seed, kShuffleStream));
  Rng mixup_rng(mix_seed(config.seed, kMixupStream));
  const auto params = net.parameters();
  const auto ckpt_config = checkpoint_config(config, phase, in.kind_label);

  TrainOutcome out;
  out.report.model_name = spec.name;
  out.report.kind = in.kind_label;
  out.report.config = config;
  std::optional<Checkpoint> best;
  std::optional<Checkpoint> last_good;
  EpochRecord best_record;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t num_classes = kNumClasses;
  std::size_t step = 0;

  try {
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      shuffle_rng.shuffle(order);
      double ce_sum = 0.0, mse_sum = 0.0;
      std::size_t correct = 0;
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t end = std::min(order.size(), start + config.batch_size);
        const std::span<const std::size_t> idx(order.data() + start, end - start);
        const std::size_t n = idx.size();
        nn::Tensor<float> x = make_batch(train, idx);
        nn::Tensor<float> target({n, num_classes});
        for (std::size_t b = 0; b < n; ++b) target[b * num_classes + train.labels[idx[b]]] = 1.0f;

        if (phase == Phase::Teacher && config.mixup.enabled) {
          std::vector<std::size_t> partner(n);
          std::iota(partner.begin(), partner.end(), std::size_t{0});
          mixup_rng.shuffle(partner);
          nn::Tensor<float> mixed_x(x.shape());
          nn::Tensor<float> mixed_t(target.shape());
          for (std::size_t b = 0; b < n; ++b) {
            const double lambda = config.mixup.fixed_lambda ? *config.mixup.fixed_lambda
                                                            : mixup_rng.beta(config.mixup.alpha, config.mixup.alpha);
            const std::size_t p = partner[b];
            std::vector<double> y1(num_classes), y2(num_classes);
            for (std::size_t c = 0; c < num_classes; ++c) {
              y1[c] = target[b * num_classes + c];
              y2[c] = target[p * num_classes + c];
            }
            const auto m = nn::mixup<float>({lambda, std::span<const float>(x.data() + b * kFeatureSize, kFeatureSize),
                                             std::span<const float>(x.data() + p * kFeatureSize, kFeatureSize), y1, y2});
            std::copy(m.input.begin(), m.input.end(), mixed_x.data() + b * kFeatureSize);
            for (std::size_t c = 0; c < num_classes; ++c) mixed_t[b * num_classes + c] = static_cast<float>(m.target[c]);
          }
          x = std::move(mixed_x);
          target = std::move(mixed_t);
        }

        net.zero_grad();
        const nn::Tensor<float> pred = net.forward(x, nn::Mode::Train);
        const auto ce = nn::cross_entropy(pred, target);
        nn::Tensor<float> grad_out = ce.grad;
        if (config.loss_weights.ce != 1.0) {
          for (auto& g : grad_out.storage()) g = static_cast<float>(g * config.loss_weights.ce);
        }

        double mse_value = 0.0;
        nn::Tensor<float> emb_grad;
        if (phase == Phase::Student && in.targets != nullptr) {
          nn::Tensor<float> emb_target({n, kEmbeddingDim});
          for (std::size_t b = 0; b < n; ++b) {
            const auto& t = (*in.targets)[idx[b]];
            std::copy(t.begin(), t.end(), emb_target.data() + b * kEmbeddingDim);
          }
          auto mse = nn::mse(net.embedding(), emb_target);
          mse_value = mse.value;
          if (distill) {
            emb_grad = std::move(mse.grad);
            for (auto& g : emb_grad.storage()) g = static_cast<float>(g * config.loss_weights.mse);
          }
        }
        if (!std::isfinite(ce.value) || !std::isfinite(mse_value)) {
          throw NonFiniteError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(step + 1) + " (ce=" + format_double(ce.value) +
                               ", mse=" + format_double(mse_value) + ")");
        }
        net.backward(grad_out, distill ? &emb_grad : nullptr);
        adam.step(params);
        ++step;

        const double total = config.loss_weights.ce * ce.value + config.loss_weights.mse * mse_value;
        out.report.steps.push_back({epoch, step, ce.value, mse_value, total});
        ce_sum += ce.value * static_cast<double>(n);
        mse_sum += mse_value * static_cast<double>(n);
        for (std::size_t b = 0; b < n; ++b) {
          const std::span<const float> row(pred.data() + b * num_classes, num_classes);
          std::size_t arg = 0;
          for (std::size_t c = 1; c < num_classes; ++c) {
            if (row[c] > row[arg]) arg = c;
          }
          if (arg == train.labels[idx[b]]) ++correct;
        }
      }

      EpochRecord rec;
      rec.epoch = epoch;
      const double count = static_cast<double>(train.size());
      rec.ce = ce_sum / count;
      rec.mse = mse_sum / count;
      rec.train_acc = static_cast<double>(correct) / count;
      if (in.eval != nullptr && in.eval->size() > 0) {
        const auto e = evaluate_set(net, *in.eval, config.batch_size);
        rec.eval_acc = e.accuracy;
        rec.eval_logloss = e.log_loss;
      }
      out.report.epochs.push_back(rec);
      last_good = make_checkpoint(net, in.standardization, ckpt_config);
      if (in.eval == nullptr || in.eval->size() == 0 || !best || better(rec, best_record)) {
        best = last_good;
        best_record = rec;
        out.report.best_epoch = epoch;
      }
      if (in.on_epoch) in.on_epoch(rec);
      if (in.should_stop && in.should_stop(rec)) break;
    }
  } catch (const NonFiniteError& e) {
    out.report.aborted = true;
    out.report.diagnostics = e.what();
  }

  if (best) {
    out.checkpoint = std::move(*best);
  } else {
    // Aborted during the first epoch: nothing better than the untouched initial weights.
    Network<float> fresh(spec, mix_seed(config.seed, kInitStream));
    out.checkpoint = make_checkpoint(fresh, in.standardization, ckpt_config);
  }
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (loss_weights.ce < 0.0 || loss_weights.mse < 0.0) throw ConfigError("loss weights must be nonnegative");
  if (loss_weights.ce == 0.0 && loss_weights.mse == 0.0) throw ConfigError("loss weights cannot both be zero");
  if (mixup.enabled && !(mixup.alpha > 0.0) && !mixup.fixed_lambda) throw ConfigError("mixup alpha must be positive");
  if (mixup.fixed_lambda && !(*mixup.fixed_lambda >= 0.0 && *mixup.fixed_lambda <= 1.0)) {
    throw ConfigError("mixup lambda must lie in [0, 1]");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json mix = {{"enabled", c.mixup.enabled}, {"alpha", c.mixup.alpha}};
  mix["fixed_lambda"] = c.mixup.fixed_lambda ? nlohmann::json(*c.mixup.fixed_lambda) : nlohmann::json(nullptr);
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"mixup", mix},
          {"loss_weights", {c.loss_weights.ce, c.loss_weights.mse}},
          {"adam", {c.adam_beta1, c.adam_beta2, c.adam_epsilon}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& mix = j.at("mixup");
    c.mixup.enabled = mix.at("enabled").get<bool>();
    c.mixup.alpha = mix.at("alpha").get<double>();
    if (!mix.at("fixed_lambda").is_null()) c.mixup.fixed_lambda = mix.at("fixed_lambda").get<double>();
    c.loss_weights.ce = j.at("loss_weights").at(0).get<double>();
    c.loss_weights.mse = j.at("loss_weights").at(1).get<double>();
    c.adam_beta1 = j.at("adam").at(0).get<double>();
    c.adam_beta2 = j.at("adam").at(1).get<double>();
    c.adam_epsilon = j.at("adam").at(2).get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed train config: ") + e.what());
  }
}

std::string format_train_report(const TrainReport& r) {
  std::string out = "epoch\tce\tmse\ttrain_acc\teval_acc\teval_logloss\n";
  for (const auto& e : r.epochs) {
    out += std::to_string(e.epoch) + "\t" + format_double(e.ce) + "\t" + format_double(e.mse) + "\t" +
           format_double(e.train_acc) + "\t" + format_double(e.eval_acc) + "\t" + format_double(e.eval_logloss) + "\n";
  }
  return out;
}

std::string format_step_log(const TrainReport& r) {
  std::string out = "epoch\tstep\tce\tmse\ttotal\n";
  for (const auto& s : r.steps) {
    out += std::to_string(s.epoch) + "\t" + std::to_string(s.step) + "\t" + format_double(s.ce) + "\t" +
           format_double(s.mse) + "\t" + format_double(s.total) + "\n";
  }
  return out;
}

nlohmann::json train_summary(const TrainReport& r) {
  return {{"model", r.model_name},   {"kind", r.kind},
          {"seed", r.config.seed},   {"config", to_json(r.config)},
          {"epochs_run", r.epochs.size()}, {"best_epoch", r.best_epoch},
          {"wall_seconds", r.wall_seconds}, {"aborted", r.aborted},
          {"diagnostics", r.diagnostics}};
}

TrainOutcome train_teacher(const ModelSpec& spec, const TrainInputs& in, const TrainConfig& config) {
  return run_training(spec, in, config, Phase::Teacher);
}

TrainOutcome train_student(const ModelSpec& spec, const TrainInputs& in, const TrainConfig& config) {
  return run_training(spec, in, config, Phase::Student);
}

std::vector<ClassPosterior> predict_posteriors(Network<float>& net, const FeatureSet& set, std::size_t batch_size) {
  std::vector<ClassPosterior> out;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(set.size(), start + batch_size); ++i) idx.push_back(i);
    const auto y = net.forward(make_batch(set, idx), nn::Mode::Eval);
    const std::size_t c = y.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      ClassPosterior p(c);
      for (std::size_t k = 0; k < c; ++k) p[k] = static_cast<double>(y[b * c + k]);
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace kdasc
