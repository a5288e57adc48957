#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pathgrad::cli {

/// Runs the pathgrad command line. args excludes the program name. Returns
/// the process exit code: 0 on success, 1 when a command fails, 2 on usage
/// errors.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pathgrad::cli
