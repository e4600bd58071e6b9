#pragma once

#include <iosfwd>

namespace wsic::app {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitRuntime = 2 };

/// Parses argv and runs one subcommand. Usage errors return 1, runtime
/// failures 2.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace wsic::app
