#pragma once
// Command-line entry point: simulate, fit, predict, explain, subgroup, bench.

#include <iosfwd>
#include <string>
#include <vector>

namespace survcate::cli {

enum ExitCode : int {
    kOk = 0,
    kInternalError = 1,
    kConfigError = 2,
    kDataError = 3,
    kNumericalError = 4,
};

// args excludes the program name. Messages go to `out` / `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace survcate::cli
