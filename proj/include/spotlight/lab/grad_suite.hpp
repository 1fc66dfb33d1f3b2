#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spotlight::lab {

inline constexpr double kGradTolerance = 1e-3;
inline constexpr double kGradStep = 1e-4;

struct GradOutcome {
  std::string name;
  double max_rel_error = 0.0;
  bool passed = false;
};

/// Central-difference checks of every differentiable primitive, the
/// rotation-trick backward against its frozen linear map, sd_loss (including
/// the exact-zero content gradient), sp_loss, and one end-to-end encode_style
/// graph. `corrupt` names a check whose input gradient is deliberately scaled,
/// to show that the harness catches a broken backward.
std::vector<GradOutcome> run_grad_suite(std::uint64_t seed, const std::string& corrupt = "");

/// Names of all checks in suite order.
std::vector<std::string> grad_suite_names();

}  // namespace spotlight::lab
