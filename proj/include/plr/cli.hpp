#pragma once

#include <iosfwd>

#include "plr/errors.hpp"

namespace plr::cli {

// Process exit codes. Library errors map to 10 + their ErrorKind ordinal so
// every kind has its own code.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUnexpected = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfigFile = 3;

int exit_code(ErrorKind kind);

// Environment variable consulted for the default --seed.
inline constexpr const char* kSeedVariable = "PLR_SEED";

// Runs one subcommand. Failures are reported on `err` as a single JSON line
// {"error": {"kind": ..., "exit_code": ..., "message": ...}}.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace plr::cli
