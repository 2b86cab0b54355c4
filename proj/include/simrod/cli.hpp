#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace simrod::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kParseFailure = 2,
  kConfigFailure = 3,
  kNumericalFailure = 4,
};

int run(int argc, char** argv);
/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace simrod::cli
