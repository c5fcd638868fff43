#pragma once

#include <exception>
#include <iosfwd>

namespace kforge {

/// Process exit statuses shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitIncorrect = 1, // candidate failed the correctness check
    kExitConfig = 2,    // bad flags, config, manifest or log file
    kExitBackend = 3,   // agent backend or transcript failure
    kExitExecutor = 4,  // compile/run/measure failure
};

/// Maps an error raised by the library onto an exit status.
int exit_code_for(const std::exception& e);

/// Entry point for `kforge <optimize|evaluate|bench|report> ...`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace kforge
