#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace caplab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the caplab tool. args[0] is the program name. Failures
// print one line "error[<category>]: <message>" to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace caplab::cli
