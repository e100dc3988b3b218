#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs the command line `args` (args[0] is the program name) and returns the
// process exit code. Results go to `out` unless --out names a file.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hm::cli
