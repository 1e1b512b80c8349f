#pragma once

namespace causaltraj::tools {

/// Runs the command line. Returns 0 on success, 2 on usage errors and 1 on
/// any other failure.
int run_cli(int argc, char** argv);

}  // namespace causaltraj::tools
