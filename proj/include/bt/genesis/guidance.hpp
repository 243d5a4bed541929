#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "bt/core/tensor.hpp"

namespace bt::genesis {

enum class Sampler { ddpm };

struct GuidanceConfig {
  double scale = 3.5;
  std::size_t steps = 50;
  int resolution = 512;
  Sampler sampler = Sampler::ddpm;
  std::optional<std::string> negative_prompt;

  /// Throws ValidationError unless scale > 0, steps >= 1, resolution >= 1.
  void validate() const;
};

/// Conditional and unconditional noise estimates at one sampling step.
struct ScorePair {
  Tensor conditional;
  Tensor unconditional;
};

/// w * conditional + (1 - w) * unconditional, elementwise.
Tensor combine_guidance(const ScorePair& pair, double w);

}  // namespace bt::genesis
