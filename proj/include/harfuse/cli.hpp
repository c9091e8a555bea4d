#ifndef HARFUSE_CLI_HPP
#define HARFUSE_CLI_HPP

#include <iosfwd>

namespace harfuse::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

/// Entry point of the `harfuse` tool: subcommands prepare, gradcheck, train, grid.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace harfuse::cli

#endif  // HARFUSE_CLI_HPP
