//===- cli.hpp - deckforge command-line front end --------------*- C++ -*-===//
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace deckforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // analysis or simulation error
inline constexpr int kExitUsage = 2;    // bad flags or unparsable input

/// Runs one invocation. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deckforge::cli
