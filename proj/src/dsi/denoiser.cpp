#include "bt/dsi/denoiser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <string>

#include "bt/core/errors.hpp"
#include "bt/core/hash.hpp"
#include "bt/core/rng.hpp"

namespace bt::dsi {

Tensor forward_noise(const DenoiserInterface& denoiser, const Tensor& z0, const Tensor& noise,
                     std::size_t t) {
  if (!z0.same_shape(noise)) throw ValidationError("noise shape differs from latent shape");
  const double abar = denoiser.alpha_bar(t);
  const double a = std::sqrt(abar);
  const double b = std::sqrt(1.0 - abar);
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < z0.size(); ++i) out[i] = a * z0[i] + b * noise[i];
  return out;
}

namespace {

std::vector<double> gaussian(std::size_t n, double stddev, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string normalize_word(std::string_view w) {
  std::size_t b = 0, e = w.size();
  while (b < e && std::ispunct(static_cast<unsigned char>(w[b]))) ++b;
  while (e > b && std::ispunct(static_cast<unsigned char>(w[e - 1]))) --e;
  std::string out(w.substr(b, e - b));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

constexpr double kWordScale = 0.5;

}  // namespace

ToyDenoiser::ToyDenoiser(ToyDenoiserConfig config)
    : config_(config), latent_dim_(config.latent_side * config.latent_side * 3) {
  if (config_.latent_side == 0 || config_.conditioning_width == 0 || config_.hidden == 0 ||
      config_.timesteps == 0) {
    throw ValidationError("toy denoiser dimensions must be positive");
  }
  const auto h = config_.hidden;
  const auto d = config_.conditioning_width;
  w1_ = gaussian(h * latent_dim_, 1.0 / std::sqrt(double(latent_dim_)), derive_seed(config_.seed, {1}));
  u_ = gaussian(h * d, 1.0 / std::sqrt(double(d)), derive_seed(config_.seed, {2}));
  b1_ = gaussian(h, 0.1, derive_seed(config_.seed, {3}));
  w2_ = gaussian(latent_dim_ * h, 1.0 / std::sqrt(double(h)), derive_seed(config_.seed, {4}));
  b2_ = gaussian(latent_dim_, 0.1, derive_seed(config_.seed, {5}));

  alpha_bar_.resize(config_.timesteps);
  double prod = 1.0;
  for (std::size_t i = 0; i < config_.timesteps; ++i) {
    double frac = config_.timesteps == 1 ? 0.0 : double(i) / double(config_.timesteps - 1);
    double beta = config_.beta_start + frac * (config_.beta_end - config_.beta_start);
    prod *= 1.0 - beta;
    alpha_bar_[i] = prod;
  }
}

std::vector<std::size_t> ToyDenoiser::latent_shape() const {
  return {3, config_.latent_side, config_.latent_side};
}

double ToyDenoiser::alpha_bar(std::size_t t) const {
  if (t < 1 || t > config_.timesteps) {
    throw ValidationError("timestep " + std::to_string(t) + " outside [1, " +
                          std::to_string(config_.timesteps) + "]");
  }
  return alpha_bar_[t - 1];
}

Tensor ToyDenoiser::encode(const Image& image) const {
  const int side = static_cast<int>(config_.latent_side);
  Tensor z(latent_shape());
  for (int c = 0; c < 3; ++c)
    for (int by = 0; by < side; ++by)
      for (int bx = 0; bx < side; ++bx) {
        int y0 = by * image.height / side, y1 = (by + 1) * image.height / side;
        int x0 = bx * image.width / side, x1 = (bx + 1) * image.width / side;
        double sum = 0;
        int n = 0;
        for (int y = y0; y < std::max(y1, y0 + 1); ++y)
          for (int x = x0; x < std::max(x1, x0 + 1); ++x, ++n) sum += image.at(x, y, c);
        z[(c * side + by) * side + bx] = sum / n / 127.5 - 1.0;
      }
  return z;
}

Image ToyDenoiser::decode(const Tensor& latent, int resolution) const {
  if (latent.shape() != latent_shape()) throw ValidationError("latent shape mismatch in decode");
  const int side = static_cast<int>(config_.latent_side);
  Image small(side, side);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        double v = (std::clamp(latent[(c * side + y) * side + x], -1.0, 1.0) + 1.0) * 127.5;
        small.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v));
      }
  return resize(small, resolution, resolution);
}

std::optional<std::vector<double>> ToyDenoiser::word_embedding(std::string_view word) const {
  auto w = normalize_word(word);
  if (w.empty()) return std::nullopt;
  return gaussian(config_.conditioning_width, kWordScale, derive_seed(config_.seed, {6, fnv1a(w)}));
}

Conditioning ToyDenoiser::embed_prompt(std::string_view prompt, std::string_view token_name,
                                       const std::vector<double>* token_embedding) const {
  const auto d = config_.conditioning_width;
  if (token_embedding && token_embedding->size() != d) {
    throw ValidationError("token embedding width " + std::to_string(token_embedding->size()) +
                          " does not match conditioning width " + std::to_string(d));
  }
  std::vector<double> rows;
  Conditioning cond;
  std::size_t n = 0;
  std::size_t pos = 0;
  while (pos < prompt.size()) {
    auto end = prompt.find(' ', pos);
    if (end == std::string_view::npos) end = prompt.size();
    auto word = prompt.substr(pos, end - pos);
    pos = end + 1;
    if (word.empty()) continue;
    if (!token_name.empty() && word == token_name) {
      cond.token_positions.push_back(n);
      if (token_embedding) {
        rows.insert(rows.end(), token_embedding->begin(), token_embedding->end());
      } else {
        rows.insert(rows.end(), d, 0.0);
      }
      ++n;
      continue;
    }
    auto e = word_embedding(word);
    if (!e) continue;
    rows.insert(rows.end(), e->begin(), e->end());
    ++n;
  }
  if (n == 0) {
    // Empty prompt: one all-zero row (the unconditional embedding).
    rows.assign(d, 0.0);
    n = 1;
  }
  cond.sequence = Tensor({n, d}, std::move(rows));
  return cond;
}

std::vector<double> ToyDenoiser::hidden_preactivation(const Tensor& z_t, std::size_t t,
                                                      const Conditioning& cond) const {
  if (z_t.size() != latent_dim_) throw ValidationError("latent size mismatch in predict_noise");
  const auto& seq = cond.sequence;
  if (seq.shape().size() != 2 || seq.shape()[1] != config_.conditioning_width) {
    throw ValidationError("conditioning width mismatch");
  }
  const auto h = config_.hidden;
  const auto d = config_.conditioning_width;
  const std::size_t len = seq.shape()[0];
  std::vector<double> pooled(d, 0.0);
  for (std::size_t r = 0; r < len; ++r)
    for (std::size_t k = 0; k < d; ++k) pooled[k] += seq[r * d + k] / double(len);

  alpha_bar(t);  // range check
  std::vector<double> pre(h);
  for (std::size_t j = 0; j < h; ++j) {
    double s = b1_[j];
    for (std::size_t i = 0; i < latent_dim_; ++i) s += w1_[j * latent_dim_ + i] * z_t[i];
    for (std::size_t k = 0; k < d; ++k) s += u_[j * d + k] * pooled[k];
    const double freq = std::pow(10000.0, -double(j / 2 * 2) / double(h));
    s += (j % 2 == 0 ? std::sin(double(t) * freq) : std::cos(double(t) * freq));
    pre[j] = s;
  }
  return pre;
}

Tensor ToyDenoiser::predict_noise(const Tensor& z_t, std::size_t t, const Conditioning& cond) const {
  auto hidden = hidden_preactivation(z_t, t, cond);
  for (auto& v : hidden) v = std::tanh(v);
  Tensor out(z_t.shape());
  const auto h = config_.hidden;
  for (std::size_t i = 0; i < latent_dim_; ++i) {
    double s = b2_[i];
    for (std::size_t j = 0; j < h; ++j) s += w2_[i * h + j] * hidden[j];
    out[i] = s;
  }
  return out;
}

Tensor ToyDenoiser::conditioning_vjp(const Tensor& z_t, std::size_t t, const Conditioning& cond,
                                     const Tensor& grad_output) const {
  if (!grad_output.same_shape(z_t)) throw ValidationError("grad_output shape mismatch");
  auto pre = hidden_preactivation(z_t, t, cond);
  const auto h = config_.hidden;
  const auto d = config_.conditioning_width;
  std::vector<double> grad_pre(h, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    double g = 0;
    for (std::size_t i = 0; i < latent_dim_; ++i) g += w2_[i * h + j] * grad_output[i];
    const double th = std::tanh(pre[j]);
    grad_pre[j] = g * (1.0 - th * th);
  }
  std::vector<double> grad_pooled(d, 0.0);
  for (std::size_t j = 0; j < h; ++j)
    for (std::size_t k = 0; k < d; ++k) grad_pooled[k] += u_[j * d + k] * grad_pre[j];
  const std::size_t len = cond.sequence.shape()[0];
  Tensor grad(cond.sequence.shape());
  for (std::size_t r = 0; r < len; ++r)
    for (std::size_t k = 0; k < d; ++k) grad[r * d + k] = grad_pooled[k] / double(len);
  return grad;
}

std::string ToyDenoiser::parameter_digest() const {
  std::vector<std::uint8_t> bytes;
  auto append = [&](const std::vector<double>& v) {
    auto p = reinterpret_cast<const std::uint8_t*>(v.data());
    bytes.insert(bytes.end(), p, p + v.size() * sizeof(double));
  };
  append(w1_);
  append(u_);
  append(b1_);
  append(w2_);
  append(b2_);
  append(alpha_bar_);
  // The hashed vocabulary and pooling encoder are functions of these.
  for (auto v : {config_.seed, std::uint64_t(config_.latent_side),
                 std::uint64_t(config_.conditioning_width)}) {
    auto p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof v);
  }
  return sha256_hex(bytes);
}

std::vector<double> ToyDenoiser::fit(const std::vector<TrainingPair>& data,
                                     const FitOptions& options) {
  if (data.empty()) throw ValidationError("toy denoiser fit needs data");
  const auto h = config_.hidden;
  const auto d = config_.conditioning_width;
  const auto n = latent_dim_;
  std::vector<std::vector<double>*> params{&w1_, &u_, &b1_, &w2_, &b2_};
  std::vector<std::vector<double>> grads(params.size()), m(params.size()), v(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    m[p].assign(params[p]->size(), 0.0);
    v[p].assign(params[p]->size(), 0.0);
  }
  const auto uncond = embed_prompt("", "", nullptr);

  std::mt19937_64 rng(derive_seed(options.seed, {0xF17}));
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_t(1, config_.timesteps);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution drop(options.condition_dropout);

  std::vector<double> losses;
  losses.reserve(options.steps);
  for (std::size_t step = 1; step <= options.steps; ++step) {
    for (std::size_t p = 0; p < params.size(); ++p) grads[p].assign(params[p]->size(), 0.0);
    double loss = 0;
    const double scale = 1.0 / double(options.batch_size * n);
    for (std::size_t b = 0; b < options.batch_size; ++b) {
      const auto& sample = data[pick(rng)];
      const auto& cond = drop(rng) ? uncond : sample.condition;
      const auto t = pick_t(rng);
      Tensor eps(sample.latent.shape());
      for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = normal(rng);
      const auto z_t = forward_noise(*this, sample.latent, eps, t);

      const auto len = cond.sequence.shape()[0];
      std::vector<double> pooled(d, 0.0);
      for (std::size_t r = 0; r < len; ++r)
        for (std::size_t k = 0; k < d; ++k) pooled[k] += cond.sequence[r * d + k] / double(len);
      auto hidden = hidden_preactivation(z_t, t, cond);
      for (auto& x : hidden) x = std::tanh(x);

      std::vector<double> dpre(h, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        double out = b2_[i];
        for (std::size_t j = 0; j < h; ++j) out += w2_[i * h + j] * hidden[j];
        const double r = eps[i] - out;
        loss += r * r * scale;
        const double dout = -2.0 * r * scale;
        grads[4][i] += dout;
        for (std::size_t j = 0; j < h; ++j) {
          grads[3][i * h + j] += dout * hidden[j];
          dpre[j] += w2_[i * h + j] * dout;
        }
      }
      for (std::size_t j = 0; j < h; ++j) {
        dpre[j] *= 1.0 - hidden[j] * hidden[j];
        grads[2][j] += dpre[j];
        for (std::size_t i = 0; i < n; ++i) grads[0][j * n + i] += dpre[j] * z_t[i];
        for (std::size_t k = 0; k < d; ++k) grads[1][j * d + k] += dpre[j] * pooled[k];
      }
    }
    const double bc1 = 1.0 - std::pow(0.9, double(step));
    const double bc2 = 1.0 - std::pow(0.999, double(step));
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& w = *params[p];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[p][i] = 0.9 * m[p][i] + 0.1 * grads[p][i];
        v[p][i] = 0.999 * v[p][i] + 0.001 * grads[p][i] * grads[p][i];
        w[i] -= options.learning_rate * (m[p][i] / bc1) / (std::sqrt(v[p][i] / bc2) + 1e-8);
      }
    }
    losses.push_back(loss);
  }
  return losses;
}

std::size_t ToyDenoiser::parameter_count() const {
  return w1_.size() + u_.size() + b1_.size() + w2_.size() + b2_.size();
}

}  // namespace bt::dsi
