#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace caadnn {

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitUnstable = 2 };

// Entry point of the `caadnn` command line tool. `args` excludes the program
// name. The human-readable summary goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace caadnn
