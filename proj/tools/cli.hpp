#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eqport::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 1,
    kSolverError = 2,
    kVerifyFail = 3,
};

/// Runs one subcommand (solve, lambda, simulate, verify, report); args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

} // namespace eqport::cli
