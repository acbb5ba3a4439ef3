#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dbmef {

/// Entry point of the `dbmef` tool. Returns 0 on success, 2 on usage errors,
/// 1 on runtime errors (with a diagnostic on `err`).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace dbmef
