#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace objnav::harness {

// Entry point of the objnav command line. `args` excludes the program name.
// Returns 0 on success, 1 on failed commands or malformed input (after a
// JSON error line on `err`), 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace objnav::harness
