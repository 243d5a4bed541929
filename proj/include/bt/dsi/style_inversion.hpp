#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bt/core/manifest.hpp"
#include "bt/dsi/denoiser.hpp"

namespace bt::dsi {

/// A learned embedding standing in for a dataset's visual style.
struct StyleToken {
  std::string name = "S*";
  std::vector<double> embedding;
  std::string dataset;
  std::uint64_t trained_iterations = 0;

  bool operator==(const StyleToken&) const = default;
};

/// Binary token file: magic, name, dataset, iterations, dim, float32 values.
void save_token(const StyleToken& token, const std::filesystem::path& path);
StyleToken load_token(const std::filesystem::path& path);

struct InversionConfig {
  std::uint64_t iterations = 20000;
  std::size_t batch_size = 4;
  double learning_rate = 5e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  /// Used only when the denoiser has no vocabulary to initialize from.
  double init_stddev = 0.5;
  std::string init_word = "style";
  std::string token_name = "S*";
  /// Consecutive draws of an empty class tolerated before giving up.
  std::size_t max_empty_draws = 100;
  std::uint64_t seed = 0;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d token.embedding
};

/// Mean squared error between `noise` and the denoiser's prediction on the
/// forward-noised latents, conditioned on the style prompt for
/// `class_name`. One noise tensor per latent.
double dsi_loss(const DenoiserInterface& denoiser, const StyleToken& token,
                const std::vector<Tensor>& latents, std::string_view class_name,
                const std::vector<Tensor>& noise, std::size_t t);

/// Same loss plus its analytic gradient w.r.t. the token embedding.
LossAndGrad dsi_loss_and_grad(const DenoiserInterface& denoiser, const StyleToken& token,
                              const std::vector<Tensor>& latents, std::string_view class_name,
                              const std::vector<Tensor>& noise, std::size_t t);

/// Image overload; images are passed through `denoiser.encode` first.
double dsi_loss(const DenoiserInterface& denoiser, const StyleToken& token,
                const std::vector<Image>& images, std::string_view class_name,
                const std::vector<Tensor>& noise, std::size_t t);

/// Encoded training images grouped by class.
struct InversionData {
  std::string dataset;
  std::vector<std::string> class_names;
  std::vector<std::vector<Tensor>> latents_by_class;
};

/// Reads and encodes every record; relative paths resolve against `root`.
InversionData encode_manifest(const SplitManifest& manifest, const DenoiserInterface& denoiser,
                              const std::filesystem::path& root);

struct InversionResult {
  StyleToken token;
  std::vector<double> loss_trace;  // one entry per optimizer step
  std::uint64_t optimizer_steps = 0;
  std::size_t trainable_parameters = 0;
  std::size_t empty_class_draws = 0;
};

/// Initial embedding: the vocabulary row of `config.init_word` when available,
/// otherwise N(0, init_stddev^2) per element.
std::vector<double> initial_token_embedding(const DenoiserInterface& denoiser,
                                            const InversionConfig& config);

/// Optimizes only the token embedding. Each step draws a class uniformly, a
/// batch of that class's latents, a timestep in [1, T] and unit-normal noise.
InversionResult train_style_token(const InversionData& data, const DenoiserInterface& denoiser,
                                  const InversionConfig& config,
                                  const std::function<void(std::uint64_t, double)>& on_step = {});

}  // namespace bt::dsi
