#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dense_eval::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kInternal = 3,
};

/// Runs the command line `args` (without the program name). Never throws;
/// failures are reported on `err` and mapped to an ExitCode.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace dense_eval::cli
