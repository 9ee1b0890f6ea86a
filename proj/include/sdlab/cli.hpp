#pragma once

namespace sdlab {

/// Entry point behind the sdlab binary. Returns the process exit code:
/// 0 success, 2 validation error, 3 runtime/numeric error, 4 I/O error.
int run_cli(int argc, const char* const* argv);

}  // namespace sdlab
