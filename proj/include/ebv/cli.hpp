#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ebv::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kNotConverged = 2,
  kInfeasible = 3,
  kUsage = 64,
  kDataError = 65,
  kIoError = 74,
};

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ebv::cli
