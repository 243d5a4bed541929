#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bt/core/image.hpp"
#include "bt/genesis/guidance.hpp"

namespace bt::dsi {
class DenoiserInterface;
struct StyleToken;
}  // namespace bt::dsi

namespace bt::genesis {

struct GenerationRequest {
  std::string prompt;
  std::size_t class_index = 0;
  std::string class_name;
  GuidanceConfig guidance;
  std::uint64_t seed = 0;
};

/// Text-to-image backend. Implementations return encoded image bytes (PNG).
class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;

  virtual std::string id() const = 0;
  /// True when equal requests always yield byte-identical output.
  virtual bool deterministic() const = 0;
  /// Maximum number of concurrent generate() calls the backend supports.
  virtual std::size_t max_parallelism() const { return 1; }

  /// Throws BackendError on a (possibly transient) failure.
  virtual std::vector<std::uint8_t> generate(const GenerationRequest& request) = 0;
};

/// Appearance knobs for the procedural stub. The defaults are the "real"
/// look; shifted settings give label-preserving domain-shifted renderings.
struct StubStyle {
  /// Shift of the class shape, as a fraction of the side.
  double offset_x = 0.0;
  double offset_y = 0.0;
  /// Added to every channel before clamping.
  int tint_r = 0, tint_g = 0, tint_b = 0;
  /// Background noise amplitude at guidance scale 1; divided by the scale.
  double noise_amplitude = 40.0;
  /// Scale of the class shape relative to the image side.
  double shape_scale = 0.35;
  /// Maximum random jitter of the shape center, as a fraction of the side.
  double jitter = 0.12;
};

/// Offline backend: seeded noise plus class-indexed geometry.
///
/// Output depends only on (class_index, seed, guidance.scale, resolution,
/// style); the prompt text is not rendered.
class StubBackend final : public GeneratorBackend {
 public:
  explicit StubBackend(StubStyle style = {}, std::string id = "stub-v1");

  std::string id() const override { return id_; }
  bool deterministic() const override { return true; }
  std::size_t max_parallelism() const override { return 64; }
  std::vector<std::uint8_t> generate(const GenerationRequest& request) override;

  Image render(std::size_t class_index, std::uint64_t seed, double guidance_scale,
               int resolution) const;

 private:
  StubStyle style_;
  std::string id_;
};

struct RemoteOptions {
  /// e.g. "http://127.0.0.1:7860/generate"
  std::string endpoint;
  /// Environment variable holding the bearer token; unset or empty -> no auth header.
  std::string token_env = "BT_GENERATOR_TOKEN";
  std::chrono::milliseconds timeout{120000};
  std::string backend_id = "remote";
};

/// HTTP client for a text-to-image service.
///
/// POSTs JSON {prompt, guidance_scale, steps, width, height, seed[, negative_prompt]}
/// and expects the image bytes as the response body.
class RemoteBackend final : public GeneratorBackend {
 public:
  explicit RemoteBackend(RemoteOptions options);

  std::string id() const override { return options_.backend_id; }
  bool deterministic() const override { return false; }
  std::size_t max_parallelism() const override { return 8; }
  std::vector<std::uint8_t> generate(const GenerationRequest& request) override;

  /// The JSON body sent for `request`.
  static std::string request_body(const GenerationRequest& request);

 private:
  RemoteOptions options_;
  std::string scheme_host_port_;
  std::string path_;
};

/// In-process sampler over a DenoiserInterface. Applies guidance inside the
/// DDPM loop and decodes the final latent. A supplied style token is spliced
/// into prompts wherever its name occurs.
class ToyDiffusionBackend final : public GeneratorBackend {
 public:
  ToyDiffusionBackend(std::shared_ptr<const dsi::DenoiserInterface> denoiser,
                      std::shared_ptr<const dsi::StyleToken> token = nullptr,
                      std::string id = "toy-ddpm");

  std::string id() const override { return id_; }
  bool deterministic() const override { return true; }
  std::vector<std::uint8_t> generate(const GenerationRequest& request) override;

 private:
  std::shared_ptr<const dsi::DenoiserInterface> denoiser_;
  std::shared_ptr<const dsi::StyleToken> token_;
  std::string id_;
};

}  // namespace bt::genesis
