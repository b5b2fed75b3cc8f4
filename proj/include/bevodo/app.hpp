#pragma once

#include <string>
#include <vector>

namespace bevodo {

/// Command-line entry point: synth | train | infer | eval | gradcheck | plot.
/// Returns the process exit status. Failures print one line
///   bevodo-error: {"command": ..., "type": ..., "message": ...}
/// to stderr and leave a PARTIAL marker in the output directory.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace bevodo
