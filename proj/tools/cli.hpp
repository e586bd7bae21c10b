#pragma once

#include <iosfwd>

namespace demokit::cli {

enum ExitCode : int {
    kOk = 0,
    kValidationError = 1, // bad input, bad flags, unknown subcommand
    kBackendFailure = 2,
};

/// Entry point behind the `demokit` binary; streams are injectable for tests.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace demokit::cli
