#pragma once

#include <iosfwd>

namespace pimbpo::bench {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Command-line entry point. Results go to `out`; a failure prints exactly
/// one line `error: <usage|runtime>: <message>` to `err`.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

} // namespace pimbpo::bench
