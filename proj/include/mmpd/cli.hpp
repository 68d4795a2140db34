#pragma once

namespace mmpd {

// Parses argv, dispatches one subcommand, and returns the process exit code:
// 0 success, 1 bad input (flags, config, ids), 2 runtime failure (I/O,
// corrupt files, training blow-ups).
int run_cli(int argc, const char* const* argv);

}  // namespace mmpd
