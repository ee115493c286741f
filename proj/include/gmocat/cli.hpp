#pragma once

#include <string>
#include <vector>

namespace gmocat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitTrainingDivergence = 4;

/// Runs the command line (argv without the program name) and returns the
/// process exit code. Errors are printed to stderr.
int run(const std::vector<std::string>& args);

}  // namespace gmocat::cli
