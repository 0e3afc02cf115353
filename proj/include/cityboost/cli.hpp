#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cb::cli {

/// Runs one command line (args exclude the program name). Returns 0 on
/// success, 2 for usage errors, 3 for data errors and 4 for internal errors;
/// failures print one `error: <Category>/<Kind>: <message>` line to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Top-level help followed by the help of every verb.
std::string full_help();

}  // namespace cb::cli
