#pragma once

#include <string>
#include <vector>

namespace semaug {

/// Runs one `semaug` command line (args[0] is the program name).
/// Returns 0 on success, 1 when a precondition fails, 2 on a usage error.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace semaug
