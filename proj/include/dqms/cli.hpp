#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dqms {

// Parse and run one command with argv-style arguments (program name not
// included).  All output, including diagnostics, goes to out.  Returns the
// process exit code: 0 success, 2 validation failure, 3 infeasible
// parameters.
int run_cli(std::vector<std::string> args, std::ostream& out);

}  // namespace dqms
