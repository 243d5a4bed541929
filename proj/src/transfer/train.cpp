#include "bt/transfer/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bt/core/errors.hpp"
#include "bt/core/rng.hpp"

namespace bt::transfer {

void StageConfig::validate() const {
  if (epochs < 1) throw ConfigError("stage epochs must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive and finite");
  }
  if (weight_decay < 0) throw ConfigError("weight decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  if (mixup && !(mixup->alpha > 0)) throw ConfigError("mixup alpha must be positive");
  if (!(augment_min_scale > 0 && augment_min_scale <= 1)) {
    throw ConfigError("augmentation min scale must lie in (0, 1]");
  }
}

StageConfig StageConfig::defaults(bool few_shot) {
  StageConfig c;
  c.epochs = few_shot ? kFewShotEpochs : kFullShotEpochs;
  return c;
}

StageConfig StageConfig::defaults_for(const BackboneProvider& provider, bool few_shot) {
  StageConfig c = defaults(few_shot);
  c.weight_decay = provider.defaults.weight_decay;
  c.batch_size = provider.defaults.batch_size;
  return c;
}

std::optional<double> reference_learning_rate(std::string_view dataset) {
  static const std::pair<std::string_view, double> table[] = {
      {"aircraft", 0.1}, {"caltech101", 0.003}, {"cars", 0.01},  {"cub200", 0.01},
      {"dtd", 0.003},    {"dogs", 0.01},        {"flowers", 0.01}, {"food", 0.01},
      {"pets", 0.003},   {"sun397", 0.003}};
  for (const auto& [name, lr] : table)
    if (name == dataset) return lr;
  return std::nullopt;
}

double cosine_lr(double lr0, int epoch, int epochs) {
  if (epochs < 1 || epoch < 0 || epoch >= epochs) {
    throw ValidationError("epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(epochs) + ")");
  }
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * double(epoch) / double(epochs)));
}

MixedBatch mixup_batch(const std::vector<float>& x_a, const std::vector<float>& x_b,
                       const std::vector<float>& y_a, const std::vector<float>& y_b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("mixup lambda " + std::to_string(lambda) + " outside [0, 1]");
  }
  if (x_a.size() != x_b.size() || y_a.size() != y_b.size()) {
    throw ValidationError("mixup operands differ in shape");
  }
  auto mix = [lambda](const std::vector<float>& a, const std::vector<float>& b) {
    std::vector<float> out(a.size());
    const float l = static_cast<float>(lambda);
    const float r = static_cast<float>(1.0 - lambda);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = l * a[i] + r * b[i];
    return out;
  };
  if (lambda == 1.0) return {x_a, y_a};
  if (lambda == 0.0) return {x_b, y_b};
  MixedBatch m{mix(x_a, x_b), mix(y_a, y_b)};
  // Rounding can push a mix a hair past its operands; keep it a convex combination.
  auto clamp = [](std::vector<float>& out, const std::vector<float>& a, const std::vector<float>& b) {
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = std::clamp(out[i], std::min(a[i], b[i]), std::max(a[i], b[i]));
  };
  clamp(m.inputs, x_a, x_b);
  clamp(m.labels, y_a, y_b);
  return m;
}

double sample_mixup_lambda(double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0)) throw ValidationError("mixup alpha must be positive");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (;;) {
    const double a = gamma(rng);
    const double b = gamma(rng);
    if (a + b > 0) return a / (a + b);
  }
}

void LabeledImages::append(const LabeledImages& other) {
  images.insert(images.end(), other.images.begin(), other.images.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  real_count += other.real_count;
  synthetic_count += other.synthetic_count;
}

LabeledImages load_images(const SplitManifest& manifest, const std::filesystem::path& root) {
  LabeledImages out;
  out.images.reserve(manifest.size());
  for (const auto& r : manifest.records()) {
    const std::filesystem::path p = std::filesystem::path(r.path).is_absolute() ? r.path : root / r.path;
    out.images.push_back(read_png(p));
    out.labels.push_back(static_cast<int>(r.class_index));
    (r.origin == ImageOrigin::real ? out.real_count : out.synthetic_count)++;
  }
  return out;
}

namespace {

constexpr std::size_t kEvalBatch = 128;

std::size_t argmax(const float* v, std::size_t n) {
  return std::size_t(std::max_element(v, v + n) - v);
}

}  // namespace

std::vector<float> predict_probabilities(BackboneHandle& model, const std::vector<Image>& images) {
  const std::size_t c = model.n_classes();
  const std::size_t in = model.extractor.in_size();
  std::vector<float> out;
  out.reserve(images.size() * c);
  for (std::size_t start = 0; start < images.size(); start += kEvalBatch) {
    const std::size_t b = std::min(kEvalBatch, images.size() - start);
    std::vector<float> x;
    x.reserve(b * in);
    for (std::size_t i = 0; i < b; ++i) {
      auto chw = to_chw(eval_preprocess(images[start + i], model.input_size));
      x.insert(x.end(), chw.begin(), chw.end());
    }
    auto p = softmax(model.logits(x, b), b, c);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<int> predict_labels(BackboneHandle& model, const std::vector<Image>& images) {
  const std::size_t c = model.n_classes();
  auto p = predict_probabilities(model, images);
  std::vector<int> labels(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) labels[i] = int(argmax(p.data() + i * c, c));
  return labels;
}

StageResult fine_tune_stage(BackboneHandle& model, const LabeledImages& train,
                            const std::optional<EvalSet>& eval, const StageConfig& config,
                            const std::function<void(const metrics::EpochRecord&)>& on_epoch) {
  config.validate();
  model.validate();
  if (train.empty()) throw ValidationError("training set is empty");
  const std::size_t n_classes = model.n_classes();
  for (int y : train.labels)
    if (y < 0 || std::size_t(y) >= n_classes) {
      throw ValidationError("label " + std::to_string(y) + " exceeds the head's " +
                            std::to_string(n_classes) + " classes");
    }

  std::vector<Param*> params = model.head.params();
  if (!config.fixed_feature) {
    auto ext = model.extractor.params();
    params.insert(params.begin(), ext.begin(), ext.end());
  }
  std::vector<std::vector<float>> velocity(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) velocity[i].assign(params[i]->value.size(), 0.0f);
  for (Param* p : model.extractor.params()) p->zero_grad();
  for (Param* p : model.head.params()) p->zero_grad();

  const std::size_t in = model.extractor.in_size();
  const bool has_eval = eval && eval->data && !eval->data->empty();
  StageResult result;
  std::vector<std::size_t> order(train.size());
  std::vector<float> grad;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(config.learning_rate, epoch, config.epochs);
    std::mt19937_64 rng(derive_seed(config.seed, {std::uint64_t(epoch)}));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, order.size() - start);
      std::vector<float> x;
      x.reserve(b * in);
      std::vector<float> y(b * n_classes, 0.0f);
      std::vector<int> hard(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t idx = order[start + i];
        auto chw = to_chw(train_augment(train.images[idx], model.input_size, rng,
                                        config.augment_min_scale));
        x.insert(x.end(), chw.begin(), chw.end());
        hard[i] = train.labels[idx];
        y[i * n_classes + std::size_t(hard[i])] = 1.0f;
      }
      if (config.mixup) {
        const double lambda = sample_mixup_lambda(config.mixup->alpha, rng);
        std::vector<std::size_t> perm(b);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<float> xb(x.size()), yb(y.size());
        std::vector<int> hard_b(b);
        for (std::size_t i = 0; i < b; ++i) {
          std::copy_n(x.begin() + long(perm[i] * in), in, xb.begin() + long(i * in));
          std::copy_n(y.begin() + long(perm[i] * n_classes), n_classes, yb.begin() + long(i * n_classes));
          hard_b[i] = hard[perm[i]];
        }
        auto mixed = mixup_batch(x, xb, y, yb, lambda);
        x = std::move(mixed.inputs);
        y = std::move(mixed.labels);
        if (lambda < 0.5) hard = hard_b;
      }

      auto logits = model.logits(x, b);
      const double loss = softmax_cross_entropy(logits, y, b, n_classes, grad);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch + 1 << ", batch starting at sample " << start
            << " (lr " << lr << ", architecture " << model.architecture << ")";
        throw DivergenceError(msg.str());
      }
      loss_sum += loss * double(b);
      for (std::size_t i = 0; i < b; ++i)
        correct += argmax(logits.data() + i * n_classes, n_classes) == std::size_t(hard[i]);

      auto g_features = model.head.backward(grad, !config.fixed_feature);
      if (!config.fixed_feature) model.extractor.backward(g_features, false);

      for (std::size_t k = 0; k < params.size(); ++k) {
        Param& p = *params[k];
        auto& v = velocity[k];
        const float wd = float(config.weight_decay);
        const float mom = float(config.momentum);
        const float step = float(lr);
        for (std::size_t j = 0; j < p.value.size(); ++j) {
          const float g = p.grad[j] + wd * p.value[j];
          v[j] = result.optimizer_steps == 0 ? g : mom * v[j] + g;
          p.value[j] -= step * v[j];
        }
        p.zero_grad();
      }
      if (config.fixed_feature)
        for (Param* p : model.extractor.params()) p->zero_grad();
      ++result.optimizer_steps;
    }

    metrics::EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.learning_rate = lr;
    rec.train_loss = loss_sum / double(train.size());
    rec.train_accuracy = double(correct) / double(train.size());
    if (has_eval) {
      rec.eval_accuracy = metrics::accuracy(eval->metric, predict_labels(model, eval->data->images),
                                            eval->data->labels, eval->n_classes);
    }
    result.trace.push(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace bt::transfer
