#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rtkd {

/// Runs one subcommand; `args` excludes the program name. Returns the exit
/// code: 0 on success, otherwise the error category, with a single
/// `ERROR:<category>: message` line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rtkd
