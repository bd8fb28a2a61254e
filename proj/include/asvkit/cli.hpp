#pragma once

#include <iosfwd>

namespace asv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one subcommand: extract, render, train, evaluate, predict, sweep,
/// export-asv, gradcheck or synth. Returns 0 on success, 1 on a usage error
/// and 2 on a data error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace asv::cli
