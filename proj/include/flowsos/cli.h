#pragma once

#include <ostream>

namespace flowsos {

inline constexpr const char* kVersion = "1.0.0";

/// Runs the command-line tool with subcommands energy-limit, bisect, verify,
/// robust and probe. Returns the exit code: 0 success or feasible, 1
/// verification or feasibility failure, 2 input error.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flowsos
