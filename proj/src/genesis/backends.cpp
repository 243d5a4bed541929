#include <httplib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <random>

#include <json.hpp>

#include "bt/core/errors.hpp"
#include "bt/core/rng.hpp"
#include "bt/dsi/denoiser.hpp"
#include "bt/dsi/style_inversion.hpp"
#include "bt/genesis/backend.hpp"
#include "bt/genesis/ddpm.hpp"

namespace bt::genesis {

StubBackend::StubBackend(StubStyle style, std::string id) : style_(style), id_(std::move(id)) {}

std::vector<std::uint8_t> StubBackend::generate(const GenerationRequest& request) {
  request.guidance.validate();
  return encode_png(render(request.class_index, request.seed, request.guidance.scale,
                           request.guidance.resolution));
}

namespace {

// HSV (s = v = 0.85) to RGB for a hue in [0, 1).
std::array<double, 3> hue_rgb(double h) {
  const double s = 0.85, v = 0.85;
  const double hh = h * 6.0;
  const int i = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

}  // namespace

Image StubBackend::render(std::size_t class_index, std::uint64_t seed, double guidance_scale,
                          int resolution) const {
  Image img(resolution, resolution);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  const double n = resolution;
  const double background = 110.0 + 30.0 * unit(rng);
  const double amp = style_.noise_amplitude / std::max(guidance_scale, 1e-3);
  const double cx = n / 2 + n * (style_.offset_x + style_.jitter * unit(rng));
  const double cy = n / 2 + n * (style_.offset_y + style_.jitter * unit(rng));
  const double radius = style_.shape_scale * n * (1.0 + 0.15 * unit(rng)) / 2 + 0.5;
  const auto colour = hue_rgb(std::fmod(double(class_index) * 0.618033988749895, 1.0));
  const int shape = static_cast<int>(class_index % 4);
  const int tint[3] = {style_.tint_r, style_.tint_g, style_.tint_b};

  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      bool inside = false;
      switch (shape) {
        case 0: inside = dx * dx + dy * dy <= radius * radius; break;
        case 1: inside = std::abs(dx) <= radius && std::abs(dy) <= radius; break;
        case 2: inside = std::abs(dy) <= radius * 0.4 && std::abs(dx) <= radius * 1.3; break;
        default: {
          const double d2 = dx * dx + dy * dy;
          inside = d2 <= radius * radius && d2 >= 0.3 * radius * radius;
        }
      }
      for (int c = 0; c < 3; ++c) {
        double v = inside ? 255.0 * colour[c] : background;
        v += amp * unit(rng) + tint[c];
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
      }
    }
  }
  return img;
}

RemoteBackend::RemoteBackend(RemoteOptions options) : options_(std::move(options)) {
  const auto& ep = options_.endpoint;
  const auto scheme_end = ep.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("remote endpoint must look like http://host:port/path: " + ep);
  }
  const auto path_start = ep.find('/', scheme_end + 3);
  scheme_host_port_ = ep.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : ep.substr(path_start);
}

std::string RemoteBackend::request_body(const GenerationRequest& request) {
  nlohmann::json body{{"prompt", request.prompt},
                      {"guidance_scale", request.guidance.scale},
                      {"steps", request.guidance.steps},
                      {"width", request.guidance.resolution},
                      {"height", request.guidance.resolution},
                      {"seed", request.seed}};
  if (request.guidance.negative_prompt) body["negative_prompt"] = *request.guidance.negative_prompt;
  return body.dump();
}

std::vector<std::uint8_t> RemoteBackend::generate(const GenerationRequest& request) {
  request.guidance.validate();
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (const char* token = std::getenv(options_.token_env.c_str()); token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  auto res = client.Post(path_, headers, request_body(request), "application/json");
  if (!res) {
    throw BackendError("request to " + options_.endpoint + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw BackendError("backend returned HTTP " + std::to_string(res->status) + ": " +
                       res->body.substr(0, 200));
  }
  if (res->body.empty()) throw BackendError("backend returned an empty body");
  return {res->body.begin(), res->body.end()};
}

ToyDiffusionBackend::ToyDiffusionBackend(std::shared_ptr<const dsi::DenoiserInterface> denoiser,
                                         std::shared_ptr<const dsi::StyleToken> token,
                                         std::string id)
    : denoiser_(std::move(denoiser)), token_(std::move(token)), id_(std::move(id)) {
  if (!denoiser_) throw ValidationError("toy diffusion backend needs a denoiser");
}

std::vector<std::uint8_t> ToyDiffusionBackend::generate(const GenerationRequest& request) {
  request.guidance.validate();
  const std::string token_name = token_ ? token_->name : std::string();
  const auto* emb = token_ ? &token_->embedding : nullptr;
  const auto cond = denoiser_->embed_prompt(request.prompt, token_name, emb);
  const auto uncond = denoiser_->embed_prompt(request.guidance.negative_prompt.value_or(""), "", nullptr);
  const auto latent =
      ddpm_sample(*denoiser_, cond, uncond, request.guidance.scale, request.guidance.steps, request.seed);
  return encode_png(denoiser_->decode(latent, request.guidance.resolution));
}

}  // namespace bt::genesis
