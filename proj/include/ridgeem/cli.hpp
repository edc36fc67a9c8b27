#pragma once

#include <iosfwd>

namespace ridgeem {

// Exit codes of the ridgeem command line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitNumerical = 2;

// Runs one command (fit, predict, simulate, benchmark, validate). The last
// line written to out is always a single "status=..." line.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ridgeem
