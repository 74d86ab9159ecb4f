#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dmoa {

enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,     // usage, configuration or I/O error
  kExitGrowing = 3,   // simulation verdict: growing
  kExitAborted = 4,   // simulation stopped by the queue guard
};

/// Entry point of the `dmoa` tool. args[0] is the program name. Errors are
/// written to `err` as one line: "error: <category>: <cause>".
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace dmoa
