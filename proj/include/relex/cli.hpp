#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace relex {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_partial = 2, exit_fatal = 3 };

/// Runs the command line `args` (without the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace relex
