#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bt/core/image.hpp"
#include "bt/core/tensor.hpp"

namespace bt::dsi {

/// An embedded prompt: an L x D sequence plus the rows holding the style token.
struct Conditioning {
  Tensor sequence;
  std::vector<std::size_t> token_positions;
};

/// Frozen latent-diffusion model as seen by style inversion and sampling.
///
/// Implementations own their noise schedule; callers query `alpha_bar`.
/// `predict_noise` must return a tensor shaped like `z_t`.
class DenoiserInterface {
 public:
  virtual ~DenoiserInterface() = default;

  virtual std::vector<std::size_t> latent_shape() const = 0;
  /// Width D of one text-conditioning row.
  virtual std::size_t conditioning_width() const = 0;
  /// Timesteps are 1..num_timesteps().
  virtual std::size_t num_timesteps() const = 0;
  /// Cumulative signal retention at step t.
  virtual double alpha_bar(std::size_t t) const = 0;

  virtual Tensor encode(const Image& image) const = 0;
  virtual Image decode(const Tensor& latent, int resolution) const = 0;

  /// Embeds `prompt`; every word equal to `token_name` is replaced by
  /// `token_embedding` (if given) and reported in `token_positions`.
  virtual Conditioning embed_prompt(std::string_view prompt, std::string_view token_name,
                                    const std::vector<double>* token_embedding) const = 0;

  /// Frozen vocabulary row for a word, if the model has a vocabulary.
  virtual std::optional<std::vector<double>> word_embedding(std::string_view word) const = 0;

  virtual Tensor predict_noise(const Tensor& z_t, std::size_t t, const Conditioning& cond) const = 0;

  /// Vector-Jacobian product of predict_noise w.r.t. the conditioning
  /// sequence: returns d<grad_output, predict_noise>/d cond.sequence.
  virtual Tensor conditioning_vjp(const Tensor& z_t, std::size_t t, const Conditioning& cond,
                                  const Tensor& grad_output) const = 0;

  /// Digest of every frozen weight (denoiser, encoder, text encoder).
  virtual std::string parameter_digest() const = 0;
};

/// Standard forward noising: sqrt(abar) * z0 + sqrt(1 - abar) * noise.
Tensor forward_noise(const DenoiserInterface& denoiser, const Tensor& z0, const Tensor& noise,
                     std::size_t t);

struct ToyDenoiserConfig {
  /// Latents are `latent_side` x `latent_side` x 3.
  std::size_t latent_side = 4;
  std::size_t conditioning_width = 16;
  std::size_t hidden = 64;
  std::size_t timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::uint64_t seed = 0;
};

/// Small MLP denoiser with a hashed-word text encoder and an average-pool
/// image encoder. Linear beta schedule.
///
///   eps = W2 tanh(W1 z + U mean(cond) + time(t) + b1) + b2
class ToyDenoiser final : public DenoiserInterface {
 public:
  explicit ToyDenoiser(ToyDenoiserConfig config = {});

  std::vector<std::size_t> latent_shape() const override;
  std::size_t conditioning_width() const override { return config_.conditioning_width; }
  std::size_t num_timesteps() const override { return config_.timesteps; }
  double alpha_bar(std::size_t t) const override;

  Tensor encode(const Image& image) const override;
  Image decode(const Tensor& latent, int resolution) const override;
  Conditioning embed_prompt(std::string_view prompt, std::string_view token_name,
                            const std::vector<double>* token_embedding) const override;
  std::optional<std::vector<double>> word_embedding(std::string_view word) const override;
  Tensor predict_noise(const Tensor& z_t, std::size_t t, const Conditioning& cond) const override;
  Tensor conditioning_vjp(const Tensor& z_t, std::size_t t, const Conditioning& cond,
                          const Tensor& grad_output) const override;
  std::string parameter_digest() const override;

  std::size_t parameter_count() const;

  /// One (clean latent, prompt conditioning) training pair.
  struct TrainingPair {
    Tensor latent;
    Conditioning condition;
  };

  struct FitOptions {
    std::size_t steps = 3000;
    std::size_t batch_size = 16;
    double learning_rate = 2e-3;
    /// Probability of replacing the condition by the empty prompt, so the
    /// model also learns the unconditional estimate.
    double condition_dropout = 0.1;
    std::uint64_t seed = 0;
  };

  /// Trains every weight on the standard noise-prediction objective (Adam).
  /// Returns the per-step loss. This is how the toy model gets "pretrained";
  /// style inversion treats the result as frozen.
  std::vector<double> fit(const std::vector<TrainingPair>& data, const FitOptions& options);
  const ToyDenoiserConfig& config() const noexcept { return config_; }

 private:
  std::vector<double> hidden_preactivation(const Tensor& z_t, std::size_t t,
                                           const Conditioning& cond) const;

  ToyDenoiserConfig config_;
  std::size_t latent_dim_;
  std::vector<double> w1_;  // hidden x latent
  std::vector<double> u_;   // hidden x cond
  std::vector<double> b1_;
  std::vector<double> w2_;  // latent x hidden
  std::vector<double> b2_;
  std::vector<double> alpha_bar_;  // index t-1
};

}  // namespace bt::dsi
