#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace topicfield {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (`args[0]` is the program name). Normal output
/// goes to `out`, diagnostics to `err`. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace topicfield
