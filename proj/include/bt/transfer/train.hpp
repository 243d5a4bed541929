#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "bt/core/dataset.hpp"
#include "bt/core/image.hpp"
#include "bt/core/manifest.hpp"
#include "bt/metrics/metrics.hpp"
#include "bt/transfer/model.hpp"

namespace bt::transfer {

inline constexpr int kFullShotEpochs = 150;
inline constexpr int kFewShotEpochs = 100;

struct MixupConfig {
  double alpha = 0.2;
};

struct StageConfig {
  double learning_rate = 0.01;
  int epochs = kFullShotEpochs;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  std::optional<MixupConfig> mixup;
  bool fc_reinit_before = false;
  bool fixed_feature = false;
  std::uint64_t seed = 0;
  /// Lower bound of the random-resized-crop area fraction.
  double augment_min_scale = 0.08;

  void validate() const;

  /// Defaults for a convolutional backbone; `few_shot` selects 100 epochs.
  static StageConfig defaults(bool few_shot = false);
  /// Defaults with the architecture's overrides applied (ViT: wd 0, batch 128).
  static StageConfig defaults_for(const BackboneProvider& provider, bool few_shot = false);
};

/// The learning-rate grid searched per dataset.
inline const std::vector<double>& default_lr_grid() {
  static const std::vector<double> grid{0.1, 0.03, 0.01, 0.003, 0.001};
  return grid;
}

/// Reference full-shot ResNet-18 learning rate for a built-in dataset, if known.
std::optional<double> reference_learning_rate(std::string_view dataset);

/// lr0 * (1 + cos(pi * epoch / epochs)) / 2 for epoch in [0, epochs).
double cosine_lr(double lr0, int epoch, int epochs);

struct MixedBatch {
  std::vector<float> inputs;
  std::vector<float> labels;
};

/// (lambda * x_a + (1 - lambda) * x_b, lambda * y_a + (1 - lambda) * y_b).
MixedBatch mixup_batch(const std::vector<float>& x_a, const std::vector<float>& x_b,
                       const std::vector<float>& y_a, const std::vector<float>& y_b, double lambda);

/// One draw from Beta(alpha, alpha) via two gamma variates.
double sample_mixup_lambda(double alpha, std::mt19937_64& rng);

/// Decoded images with their labels; images keep their original size and
/// are augmented / preprocessed per use.
struct LabeledImages {
  std::vector<Image> images;
  std::vector<int> labels;
  std::size_t real_count = 0;
  std::size_t synthetic_count = 0;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  void append(const LabeledImages& other);
};

/// Decodes every record; relative paths resolve against `root`.
LabeledImages load_images(const SplitManifest& manifest, const std::filesystem::path& root);

/// Softmax outputs (n x n_classes) after eval preprocessing.
std::vector<float> predict_probabilities(BackboneHandle& model, const std::vector<Image>& images);
std::vector<int> predict_labels(BackboneHandle& model, const std::vector<Image>& images);

struct EvalSet {
  const LabeledImages* data = nullptr;
  AccuracyMetric metric = AccuracyMetric::top1;
  std::size_t n_classes = 0;
};

struct StageResult {
  metrics::ConvergenceTrace trace;
  std::size_t optimizer_steps = 0;
};

/// SGD (momentum, L2 weight decay) with per-epoch cosine annealing over
/// config.epochs epochs. Throws DivergenceError on a non-finite loss. With
/// no eval set the trace's eval fields stay empty.
StageResult fine_tune_stage(BackboneHandle& model, const LabeledImages& train,
                            const std::optional<EvalSet>& eval, const StageConfig& config,
                            const std::function<void(const metrics::EpochRecord&)>& on_epoch = {});

}  // namespace bt::transfer
