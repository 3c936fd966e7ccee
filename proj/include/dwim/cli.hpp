#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dwim::cli {

/// Entry point of the `dwim` binary. Returns the process exit status:
/// 0 on success, 2 on usage errors, 1 on schema or I/O failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dwim::cli
