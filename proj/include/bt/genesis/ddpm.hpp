#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "bt/core/tensor.hpp"
#include "bt/dsi/denoiser.hpp"

namespace bt::genesis {

/// Evenly spaced descending timesteps T..1, `steps` of them.
std::vector<std::size_t> ddpm_timesteps(std::size_t num_timesteps, std::size_t steps);

/// Ancestral DDPM sampling with classifier-free guidance. At every step the
/// conditional and unconditional predictions are merged with
/// combine_guidance(·, w). Deterministic in `seed`. With `clip_denoised`
/// the implied clean latent is clamped to [-1, 1] before each update.
Tensor ddpm_sample(const dsi::DenoiserInterface& denoiser, const dsi::Conditioning& cond,
                   const dsi::Conditioning& uncond, double w, std::size_t steps,
                   std::uint64_t seed, bool clip_denoised = true);

}  // namespace bt::genesis
