#pragma once

namespace coda::cli {

/// Parse the command line and execute the requested pipeline stages.
/// Returns the process exit code: 0 on success, 2 for input and usage
/// problems, 3 for numerical or data failures.
int run_cli(int argc, const char* const* argv);

} // namespace coda::cli
