#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace socnn::cli {

/// Parses `args` (without the program name) and runs the selected command.
/// Returns the process exit code.
int run_app(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace socnn::cli
