#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cvar_mdp::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,  // oracle comparisons that did not hold, internal errors
  kInputError = 2,
  kNotConverged = 3,
  kSizeGuard = 4,
};

/// Runs the `cvar_mdp` command line. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cvar_mdp::cli
