#include "bt/dsi/style_inversion.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "bt/core/errors.hpp"
#include "bt/core/rng.hpp"
#include "bt/prompts/prompts.hpp"

namespace bt::dsi {
namespace {

constexpr char kTokenMagic[8] = {'B', 'T', 'T', 'O', 'K', 'E', 'N', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& file) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ParseError(file, 1, "truncated token file");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& file) {
  auto n = get<std::uint32_t>(in, file);
  if (n > (1u << 20)) throw ParseError(file, 1, "implausible string length in token file");
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ParseError(file, 1, "truncated token file");
  return s;
}

void check_dims(const DenoiserInterface& denoiser, const StyleToken& token,
                const std::vector<Tensor>& latents, const std::vector<Tensor>& noise) {
  if (token.embedding.size() != denoiser.conditioning_width()) {
    throw ValidationError("token '" + token.name + "' has width " +
                          std::to_string(token.embedding.size()) +
                          " but the conditioning slot expects " +
                          std::to_string(denoiser.conditioning_width()));
  }
  if (latents.empty()) throw ValidationError("dsi_loss needs a non-empty batch");
  if (latents.size() != noise.size()) throw ValidationError("one noise tensor per latent required");
}

}  // namespace

void save_token(const StyleToken& token, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kTokenMagic, sizeof kTokenMagic);
  put_string(out, token.name);
  put_string(out, token.dataset);
  put<std::uint64_t>(out, token.trained_iterations);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(token.embedding.size()));
  for (double v : token.embedding) put<float>(out, static_cast<float>(v));
  if (!out) throw IoError("write failed for " + path.string());
}

StyleToken load_token(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const auto file = path.string();
  if (!in) throw IoError("cannot open token file " + file);
  char magic[sizeof kTokenMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kTokenMagic, sizeof magic) != 0) {
    throw ParseError(file, 1, "not a style token file");
  }
  StyleToken t;
  t.name = get_string(in, file);
  t.dataset = get_string(in, file);
  t.trained_iterations = get<std::uint64_t>(in, file);
  auto dim = get<std::uint32_t>(in, file);
  t.embedding.resize(dim);
  for (auto& v : t.embedding) {
    v = get<float>(in, file);
    if (!std::isfinite(v)) throw ParseError(file, 1, "non-finite value in token embedding");
  }
  return t;
}

LossAndGrad dsi_loss_and_grad(const DenoiserInterface& denoiser, const StyleToken& token,
                              const std::vector<Tensor>& latents, std::string_view class_name,
                              const std::vector<Tensor>& noise, std::size_t t) {
  check_dims(denoiser, token, latents, noise);
  const auto prompt = prompts::render_style_prompt(class_name, token.name);
  const auto cond = denoiser.embed_prompt(prompt, token.name, &token.embedding);
  const auto width = denoiser.conditioning_width();

  double total_elems = 0;
  for (const auto& z : latents) total_elems += double(z.size());

  LossAndGrad out;
  out.grad.assign(width, 0.0);
  for (std::size_t b = 0; b < latents.size(); ++b) {
    const auto z_t = forward_noise(denoiser, latents[b], noise[b], t);
    const auto pred = denoiser.predict_noise(z_t, t, cond);
    Tensor dpred(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double r = noise[b][i] - pred[i];
      out.loss += r * r / total_elems;
      dpred[i] = -2.0 * r / total_elems;
    }
    const auto dcond = denoiser.conditioning_vjp(z_t, t, cond, dpred);
    for (auto row : cond.token_positions)
      for (std::size_t k = 0; k < width; ++k) out.grad[k] += dcond[row * width + k];
  }
  return out;
}

double dsi_loss(const DenoiserInterface& denoiser, const StyleToken& token,
                const std::vector<Tensor>& latents, std::string_view class_name,
                const std::vector<Tensor>& noise, std::size_t t) {
  check_dims(denoiser, token, latents, noise);
  const auto prompt = prompts::render_style_prompt(class_name, token.name);
  const auto cond = denoiser.embed_prompt(prompt, token.name, &token.embedding);
  double total_elems = 0;
  for (const auto& z : latents) total_elems += double(z.size());
  double loss = 0;
  for (std::size_t b = 0; b < latents.size(); ++b) {
    const auto pred = denoiser.predict_noise(forward_noise(denoiser, latents[b], noise[b], t), t, cond);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double r = noise[b][i] - pred[i];
      loss += r * r / total_elems;
    }
  }
  return loss;
}

double dsi_loss(const DenoiserInterface& denoiser, const StyleToken& token,
                const std::vector<Image>& images, std::string_view class_name,
                const std::vector<Tensor>& noise, std::size_t t) {
  std::vector<Tensor> latents;
  latents.reserve(images.size());
  for (const auto& img : images) latents.push_back(denoiser.encode(img));
  return dsi_loss(denoiser, token, latents, class_name, noise, t);
}

InversionData encode_manifest(const SplitManifest& manifest, const DenoiserInterface& denoiser,
                              const std::filesystem::path& root) {
  InversionData data;
  data.dataset = manifest.dataset().name();
  data.class_names = manifest.dataset().class_names();
  data.latents_by_class.resize(data.class_names.size());
  for (const auto& r : manifest.records()) {
    auto p = r.path.is_absolute() ? r.path : root / r.path;
    data.latents_by_class[r.class_index].push_back(denoiser.encode(read_png(p)));
  }
  return data;
}

std::vector<double> initial_token_embedding(const DenoiserInterface& denoiser,
                                            const InversionConfig& config) {
  if (auto e = denoiser.word_embedding(config.init_word)) return *e;
  std::mt19937_64 rng(derive_seed(config.seed, {0x1417}));
  std::normal_distribution<double> dist(0.0, config.init_stddev);
  std::vector<double> v(denoiser.conditioning_width());
  for (auto& x : v) x = dist(rng);
  return v;
}

InversionResult train_style_token(const InversionData& data, const DenoiserInterface& denoiser,
                                  const InversionConfig& config,
                                  const std::function<void(std::uint64_t, double)>& on_step) {
  if (config.iterations < 1) throw ValidationError("inversion needs at least one iteration");
  if (config.batch_size < 1) throw ValidationError("inversion batch size must be positive");
  if (data.class_names.empty() || data.class_names.size() != data.latents_by_class.size()) {
    throw ValidationError("inversion data has no classes");
  }
  std::size_t total = 0;
  for (const auto& c : data.latents_by_class) total += c.size();
  if (total == 0) throw ValidationError("inversion data contains no images");

  InversionResult result;
  result.token.name = config.token_name;
  result.token.dataset = data.dataset;
  result.token.embedding = initial_token_embedding(denoiser, config);
  const auto width = result.token.embedding.size();
  result.trainable_parameters = width;
  result.loss_trace.reserve(config.iterations);

  std::vector<double> m(width, 0.0), v(width, 0.0);
  std::mt19937_64 rng(derive_seed(config.seed, {0xD51}));
  std::uniform_int_distribution<std::size_t> pick_class(0, data.class_names.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_t(1, denoiser.num_timesteps());
  std::normal_distribution<double> normal(0.0, 1.0);

  std::size_t consecutive_empty = 0;
  while (result.optimizer_steps < config.iterations) {
    const auto c = pick_class(rng);
    const auto& pool = data.latents_by_class[c];
    if (pool.empty()) {
      ++result.empty_class_draws;
      if (++consecutive_empty == 1) {
        std::cerr << "warning: class '" << data.class_names[c] << "' has no images; resampling\n";
      }
      if (consecutive_empty >= config.max_empty_draws) {
        throw InsufficientDataError(data.class_names[c], 0, 1);
      }
      continue;
    }
    consecutive_empty = 0;

    std::vector<Tensor> batch;
    std::vector<Tensor> noise;
    if (pool.size() >= config.batch_size) {
      std::vector<std::size_t> idx(pool.size());
      std::iota(idx.begin(), idx.end(), 0);
      for (std::size_t i = 0; i < config.batch_size; ++i) {
        std::uniform_int_distribution<std::size_t> j(i, idx.size() - 1);
        std::swap(idx[i], idx[j(rng)]);
        batch.push_back(pool[idx[i]]);
      }
    } else {
      std::uniform_int_distribution<std::size_t> j(0, pool.size() - 1);
      for (std::size_t i = 0; i < config.batch_size; ++i) batch.push_back(pool[j(rng)]);
    }
    for (const auto& z : batch) {
      Tensor e(z.shape());
      for (std::size_t i = 0; i < e.size(); ++i) e[i] = normal(rng);
      noise.push_back(std::move(e));
    }
    const auto t = pick_t(rng);

    auto lg = dsi_loss_and_grad(denoiser, result.token, batch, data.class_names[c], noise, t);
    if (!std::isfinite(lg.loss)) throw DivergenceError("style inversion loss became non-finite");

    ++result.optimizer_steps;
    const double step = double(result.optimizer_steps);
    const double bc1 = 1.0 - std::pow(config.adam_beta1, step);
    const double bc2 = 1.0 - std::pow(config.adam_beta2, step);
    for (std::size_t k = 0; k < width; ++k) {
      m[k] = config.adam_beta1 * m[k] + (1 - config.adam_beta1) * lg.grad[k];
      v[k] = config.adam_beta2 * v[k] + (1 - config.adam_beta2) * lg.grad[k] * lg.grad[k];
      result.token.embedding[k] -=
          config.learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + config.adam_epsilon);
    }
    result.loss_trace.push_back(lg.loss);
    if (on_step) on_step(result.optimizer_steps, lg.loss);
  }
  result.token.trained_iterations = result.optimizer_steps;
  return result;
}

}  // namespace bt::dsi
