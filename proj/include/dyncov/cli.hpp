#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dyncov {

inline constexpr const char* kVersion = "0.1.0";

// Runs the `dyncov` command line. `args` excludes the program name.
// Returns 0 on success, 1 on a runtime failure and 2 on a usage error.
// Failures print "error: <Category>: <message>" on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dyncov
