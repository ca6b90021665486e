#pragma once

#include <string>
#include <vector>

namespace obed {

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast oracle and invariant checks: closed-form EIG, transform Jacobians,
/// analytic density gradients, filter weight normalization, resampling
/// unbiasedness and determinism. Runs in a few seconds.
std::vector<SelfCheck> run_selftest();

}  // namespace obed
