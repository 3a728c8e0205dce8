#pragma once

// Finite-difference checks of every backward pass, shared by the CLI and the
// test suites. Each check uses a random linear functional of the op's output
// as the scalar loss, f64 and central differences with eps = 1e-6.

#include <cstdint>
#include <string>
#include <vector>

namespace bdeblur {

inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckReport {
  std::string name;
  double max_rel_error = 0.0;
  size_t coords = 0;  // coordinates compared
};

/// module: "all", "nn", "fba" or "deconvnet".
std::vector<GradCheckReport> run_grad_checks(const std::string& module, uint64_t seed = 1);

}  // namespace bdeblur
