#include "bt/genesis/ddpm.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "bt/core/errors.hpp"
#include "bt/genesis/guidance.hpp"

namespace bt::genesis {

std::vector<std::size_t> ddpm_timesteps(std::size_t num_timesteps, std::size_t steps) {
  if (steps < 1 || steps > num_timesteps) {
    throw ValidationError("sampler steps must be in [1, " + std::to_string(num_timesteps) + "]");
  }
  std::vector<std::size_t> ts(steps);
  for (std::size_t i = 0; i < steps; ++i) ts[i] = (steps - i) * num_timesteps / steps;
  return ts;
}

Tensor ddpm_sample(const dsi::DenoiserInterface& denoiser, const dsi::Conditioning& cond,
                   const dsi::Conditioning& uncond, double w, std::size_t steps,
                   std::uint64_t seed, bool clip_denoised) {
  const auto ts = ddpm_timesteps(denoiser.num_timesteps(), steps);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Tensor x(denoiser.latent_shape());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = normal(rng);

  for (std::size_t k = 0; k < ts.size(); ++k) {
    const auto t = ts[k];
    const double abar_t = denoiser.alpha_bar(t);
    const double abar_prev = k + 1 < ts.size() ? denoiser.alpha_bar(ts[k + 1]) : 1.0;
    const double alpha = abar_t / abar_prev;
    const double beta = 1.0 - alpha;

    ScorePair pair{denoiser.predict_noise(x, t, cond), denoiser.predict_noise(x, t, uncond)};
    const auto eps = combine_guidance(pair, w);

    // Posterior mean written through the predicted clean latent, clipped to
    // the latent range [-1, 1].
    const double sqrt_abar = std::sqrt(abar_t);
    const double sqrt_one_minus = std::sqrt(1.0 - abar_t);
    const double c_x0 = std::sqrt(abar_prev) * beta / (1.0 - abar_t);
    const double c_xt = std::sqrt(alpha) * (1.0 - abar_prev) / (1.0 - abar_t);
    const double sigma =
        k + 1 < ts.size() ? std::sqrt(beta * (1.0 - abar_prev) / (1.0 - abar_t)) : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double x0 = (x[i] - sqrt_one_minus * eps[i]) / sqrt_abar;
      if (clip_denoised) x0 = std::clamp(x0, -1.0, 1.0);
      x[i] = c_x0 * x0 + c_xt * x[i];
      if (sigma > 0.0) x[i] += sigma * normal(rng);
    }
  }
  return x;
}

}  // namespace bt::genesis
