#pragma once

#include <string>
#include <vector>

namespace bdeblur::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitFailure = 3;

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args);

}  // namespace bdeblur::cli
