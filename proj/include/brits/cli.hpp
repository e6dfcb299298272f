#pragma once

#include <iosfwd>

namespace brits {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

/// Entry point shared by the executable and the tests. Messages go to `out`
/// and errors to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace brits
