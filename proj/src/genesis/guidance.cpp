#include "bt/genesis/guidance.hpp"

#include <cmath>

#include "bt/core/errors.hpp"

namespace bt::genesis {

void GuidanceConfig::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("guidance scale must be > 0");
  if (steps < 1) throw ValidationError("sampler needs at least one step");
  if (resolution < 1) throw ValidationError("resolution must be positive");
}

Tensor combine_guidance(const ScorePair& pair, double w) {
  if (!pair.conditional.same_shape(pair.unconditional)) {
    throw ValidationError("conditional and unconditional estimates differ in shape");
  }
  if (!std::isfinite(w)) throw ValidationError("guidance scale must be finite");
  Tensor out(pair.conditional.shape());
  const double wu = 1.0 - w;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = w * pair.conditional[i] + wu * pair.unconditional[i];
  }
  return out;
}

}  // namespace bt::genesis
