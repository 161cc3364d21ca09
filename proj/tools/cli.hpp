#pragma once

#include <ostream>

namespace relearn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitPartial = 2;
inline constexpr int kExitNumeric = 3;

/// Parses arguments and runs one subcommand. Library errors are reported on
/// `err` and mapped to exit codes; nothing escapes as an exception.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace relearn::cli
