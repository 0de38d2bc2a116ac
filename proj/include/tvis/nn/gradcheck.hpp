#pragma once

#include "tvis/core/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tvis::nn {

struct GradCheckResult {
  std::string name;
  Real max_rel_err = 0;
  int entries_checked = 0;
};

/// |a - f| / max(1, |a|, |f|).
Real gradcheck_rel_err(Real analytic, Real numeric);

/// Central-difference verification (step 1e-5) of every analytic gradient
/// path: the attention block (parameters and inputs), class/box/kernel heads
/// through their losses, focal/dice/bce, and the contrastive projection+loss.
/// One entry per check per instance.
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed, int instances);

}  // namespace tvis::nn
