#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace instavo::tools {

enum ExitCode { kExitOk = 0, kExitRuntimeFailure = 1, kExitUsage = 2 };

// Runs one subcommand. `args` excludes the program name. Summaries go to
// `out`, diagnostics and usage errors to `err`.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int Run(int argc, const char* const* argv);

}  // namespace instavo::tools
