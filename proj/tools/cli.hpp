#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace falsecl::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;

/// Runs one CLI invocation; args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace falsecl::cli
