#pragma once

#include <string>
#include <vector>

namespace gatecap {

// Entry point behind the gatecap binary. Subcommands: toyworld, mine, train,
// caption, eval, gradcheck, analyze. Returns the process exit code:
// 0 success, 2 usage/config error, 3 data error, 4 numeric error.
int run_cli(const std::vector<std::string>& args);

}  // namespace gatecap
