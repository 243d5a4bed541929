#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "bt/core/errors.hpp"
#include "bt/dsi/denoiser.hpp"
#include "bt/dsi/style_inversion.hpp"
#include "../support/temp_dir.hpp"

namespace bt::dsi {
namespace {

/// Wraps the toy model but overrides predict_noise.
class FixedPredictionDenoiser : public DenoiserInterface {
 public:
  enum class Mode { zero, exact_for_zero_latents };
  explicit FixedPredictionDenoiser(Mode mode) : mode_(mode) {}

  std::vector<std::size_t> latent_shape() const override { return base_.latent_shape(); }
  std::size_t conditioning_width() const override { return base_.conditioning_width(); }
  std::size_t num_timesteps() const override { return base_.num_timesteps(); }
  double alpha_bar(std::size_t t) const override { return base_.alpha_bar(t); }
  Tensor encode(const Image& image) const override { return base_.encode(image); }
  Image decode(const Tensor& latent, int resolution) const override {
    return base_.decode(latent, resolution);
  }
  Conditioning embed_prompt(std::string_view p, std::string_view n,
                            const std::vector<double>* e) const override {
    return base_.embed_prompt(p, n, e);
  }
  std::optional<std::vector<double>> word_embedding(std::string_view w) const override {
    return base_.word_embedding(w);
  }
  Tensor predict_noise(const Tensor& z_t, std::size_t t, const Conditioning&) const override {
    Tensor out(z_t.shape());
    if (mode_ == Mode::exact_for_zero_latents) {
      // z0 = 0  =>  z_t = sqrt(1 - abar) * eps
      const double s = std::sqrt(1.0 - alpha_bar(t));
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = z_t[i] / s;
    }
    return out;
  }
  Tensor conditioning_vjp(const Tensor&, std::size_t, const Conditioning& c,
                          const Tensor&) const override {
    return Tensor(c.sequence.shape());
  }
  std::string parameter_digest() const override { return base_.parameter_digest(); }

 private:
  Mode mode_;
  ToyDenoiser base_;
};

Tensor randn(const std::vector<std::size_t>& shape, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = n(rng);
  return t;
}

StyleToken token_for(const DenoiserInterface& d, std::uint64_t seed = 0) {
  StyleToken tok;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.5);
  tok.embedding.resize(d.conditioning_width());
  for (auto& v : tok.embedding) v = n(rng);
  return tok;
}

TEST(DsiLoss, PerfectDenoiserGivesZero) {
  FixedPredictionDenoiser d(FixedPredictionDenoiser::Mode::exact_for_zero_latents);
  std::mt19937_64 rng(1);
  std::vector<Tensor> z(4, Tensor(d.latent_shape()));
  std::vector<Tensor> eps;
  for (int i = 0; i < 4; ++i) eps.push_back(randn(d.latent_shape(), rng));
  for (std::size_t t : {1, 10, 500, 1000}) {
    EXPECT_NEAR(dsi_loss(d, token_for(d), z, "cat", eps, t), 0.0, 1e-24);
  }
}

TEST(DsiLoss, ZeroPredictionApproachesOnePerElement) {
  FixedPredictionDenoiser d(FixedPredictionDenoiser::Mode::zero);
  std::mt19937_64 rng(2);
  // 48-element latents; 2100 of them gives > 1e5 noise draws.
  std::vector<Tensor> z, eps;
  for (int i = 0; i < 2100; ++i) {
    z.push_back(randn(d.latent_shape(), rng));
    eps.push_back(randn(d.latent_shape(), rng));
  }
  ASSERT_GE(z.size() * z[0].size(), 100000u);
  EXPECT_NEAR(dsi_loss(d, token_for(d), z, "cat", eps, 300), 1.0, 0.01);
}

TEST(DsiLoss, GradientMatchesCentralDifferences) {
  ToyDenoiser d;
  ASSERT_LE(d.parameter_count(), 10000u);
  std::mt19937_64 rng(3);
  std::vector<Tensor> z, eps;
  for (int i = 0; i < 3; ++i) {
    z.push_back(randn(d.latent_shape(), rng));
    eps.push_back(randn(d.latent_shape(), rng));
  }
  for (std::size_t t : {5, 250, 900}) {
    auto tok = token_for(d, t);
    auto lg = dsi_loss_and_grad(d, tok, z, "braided", eps, t);
    EXPECT_NEAR(lg.loss, dsi_loss(d, tok, z, "braided", eps, t), 1e-12);
    const double h = 1e-4;
    double max_rel = 0;
    for (std::size_t k = 0; k < tok.embedding.size(); ++k) {
      auto plus = tok, minus = tok;
      plus.embedding[k] += h;
      minus.embedding[k] -= h;
      const double fd = (dsi_loss(d, plus, z, "braided", eps, t) -
                         dsi_loss(d, minus, z, "braided", eps, t)) / (2 * h);
      const double denom = std::max({std::abs(fd), std::abs(lg.grad[k]), 1e-8});
      max_rel = std::max(max_rel, std::abs(fd - lg.grad[k]) / denom);
    }
    EXPECT_LE(max_rel, 1e-4) << "t=" << t;
  }
}

TEST(DsiLoss, NonNegative) {
  ToyDenoiser d;
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor> z{randn(d.latent_shape(), rng)}, eps{randn(d.latent_shape(), rng)};
    EXPECT_GE(dsi_loss(d, token_for(d, trial), z, "x", eps, 1 + trial * 40), 0.0);
  }
}

TEST(DsiLoss, WidthMismatchIsValidationError) {
  ToyDenoiser d;
  StyleToken tok;
  tok.embedding.assign(d.conditioning_width() + 1, 0.0);
  std::vector<Tensor> z{Tensor(d.latent_shape())}, eps{Tensor(d.latent_shape())};
  EXPECT_THROW(dsi_loss(d, tok, z, "cat", eps, 10), ValidationError);
}

InversionData toy_data(const ToyDenoiser& d, std::size_t classes, std::size_t per_class,
                       std::uint64_t seed) {
  InversionData data;
  data.dataset = "toy";
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.2);
  for (std::size_t c = 0; c < classes; ++c) {
    data.class_names.push_back("class" + std::to_string(c));
    data.latents_by_class.emplace_back();
    for (std::size_t i = 0; i < per_class; ++i) {
      Tensor z(d.latent_shape());
      // Shared dataset "style" (+0.4 offset, channel bias) plus class signal.
      for (std::size_t k = 0; k < z.size(); ++k) z[k] = 0.4 + 0.3 * double(k % 3) - 0.2 * double(c) + n(rng);
      data.latents_by_class.back().push_back(std::move(z));
    }
  }
  return data;
}

TEST(TrainStyleToken, DefaultsRunTwentyThousandStepsAndFreezeModel) {
  ToyDenoiser d;
  const auto before = d.parameter_digest();
  auto data = toy_data(d, 3, 5, 1);
  InversionConfig cfg;
  EXPECT_EQ(cfg.iterations, 20000u);
  std::uint64_t callbacks = 0;
  auto res = train_style_token(data, d, cfg, [&](std::uint64_t, double) { ++callbacks; });
  EXPECT_EQ(res.optimizer_steps, 20000u);
  EXPECT_EQ(res.loss_trace.size(), 20000u);
  EXPECT_EQ(callbacks, 20000u);
  EXPECT_EQ(res.token.trained_iterations, 20000u);
  EXPECT_EQ(d.parameter_digest(), before);
  EXPECT_EQ(res.trainable_parameters, d.conditioning_width());
  EXPECT_NE(res.token.embedding, initial_token_embedding(d, cfg));
}

TEST(TrainStyleToken, TrainableCountIndependentOfClassCount) {
  ToyDenoiser d;
  InversionConfig cfg;
  cfg.iterations = 10;
  for (std::size_t classes : {1, 5, 40}) {
    auto res = train_style_token(toy_data(d, classes, 2, classes), d, cfg);
    EXPECT_EQ(res.trainable_parameters, d.conditioning_width());
    EXPECT_EQ(res.token.embedding.size(), d.conditioning_width());
  }
}

TEST(TrainStyleToken, InitializesFromVocabularyWord) {
  ToyDenoiser d;
  InversionConfig cfg;
  EXPECT_EQ(initial_token_embedding(d, cfg), *d.word_embedding("style"));
}

TEST(TrainStyleToken, DeterministicGivenSeed) {
  ToyDenoiser d;
  auto data = toy_data(d, 4, 3, 9);
  InversionConfig cfg;
  cfg.iterations = 300;
  cfg.seed = 11;
  auto a = train_style_token(data, d, cfg);
  auto b = train_style_token(data, d, cfg);
  EXPECT_EQ(a.token, b.token);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(TrainStyleToken, LossDecreasesAcrossSeeds) {
  ToyDenoiser d;
  auto data = toy_data(d, 4, 8, 21);
  InversionConfig cfg;
  cfg.iterations = 2000;
  const std::size_t window = cfg.iterations / 20;  // 5%
  std::vector<double> first, last;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    auto res = train_style_token(data, d, cfg);
    double f = 0, l = 0;
    for (std::size_t i = 0; i < window; ++i) {
      f += res.loss_trace[i] / double(window);
      l += res.loss_trace[res.loss_trace.size() - window + i] / double(window);
    }
    first.push_back(f);
    last.push_back(l);
  }
  std::sort(first.begin(), first.end());
  std::sort(last.begin(), last.end());
  EXPECT_LT(last[2], first[2]);
}

TEST(TrainStyleToken, EmptyClassesResampledThenError) {
  ToyDenoiser d;
  auto data = toy_data(d, 2, 3, 1);
  data.latents_by_class[0].clear();
  InversionConfig cfg;
  cfg.iterations = 50;
  auto res = train_style_token(data, d, cfg);
  EXPECT_EQ(res.optimizer_steps, 50u);
  EXPECT_GT(res.empty_class_draws, 0u);

  cfg.max_empty_draws = 1;
  EXPECT_THROW(train_style_token(data, d, cfg), InsufficientDataError);

  data.latents_by_class[1].clear();
  EXPECT_THROW(train_style_token(data, d, cfg), ValidationError);
}

TEST(TokenFile, RoundTripsAtFloatPrecision) {
  testing::TempDir tmp;
  StyleToken tok{"<aircraft-style>", {0.1, -2.5, 3.25e-7, 1e10}, "aircraft", 20000};
  save_token(tok, tmp / "t.bt");
  auto back = load_token(tmp / "t.bt");
  EXPECT_EQ(back.name, tok.name);
  EXPECT_EQ(back.dataset, tok.dataset);
  EXPECT_EQ(back.trained_iterations, 20000u);
  ASSERT_EQ(back.embedding.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_EQ(back.embedding[i], static_cast<double>(static_cast<float>(tok.embedding[i])));
  write_file(tmp / "bad.bt", std::vector<std::uint8_t>{'n', 'o', 'p', 'e'});
  EXPECT_THROW(load_token(tmp / "bad.bt"), ParseError);
}

TEST(ToyDenoiser, PromptEmbeddingMarksTokenSlot) {
  ToyDenoiser d;
  std::vector<double> emb(d.conditioning_width(), 7.0);
  auto c = d.embed_prompt("A braided photo in the style of S*", "S*", &emb);
  ASSERT_EQ(c.token_positions.size(), 1u);
  EXPECT_EQ(c.sequence.shape()[0], 8u);
  EXPECT_EQ(c.sequence[c.token_positions[0] * d.conditioning_width()], 7.0);
  auto u = d.embed_prompt("", "", nullptr);
  EXPECT_EQ(u.sequence.shape()[0], 1u);
}

TEST(ToyDenoiser, EncodeDecodeShapes) {
  ToyDenoiser d;
  Image img(32, 32);
  std::fill(img.pixels.begin(), img.pixels.end(), 255);
  auto z = d.encode(img);
  EXPECT_EQ(z.shape(), d.latent_shape());
  for (auto v : z.values()) EXPECT_DOUBLE_EQ(v, 1.0);
  auto back = d.decode(z, 16);
  EXPECT_EQ(back.width, 16);
  EXPECT_EQ(back.pixels[0], 255);
}

}  // namespace
}  // namespace bt::dsi
