#ifndef DSPL_CLI_HPP_
#define DSPL_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace dspl {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,         // bad flags or config
  kExitIncompatible = 3,  // data/model mismatch or unreadable inputs
  kExitDivergence = 4,
};

/// Runs the command line `args` (args[0] is the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dspl

#endif  // DSPL_CLI_HPP_
