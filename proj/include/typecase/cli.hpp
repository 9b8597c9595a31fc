#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace typecase {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // the dataset failed validation
inline constexpr int kExitUsage = 2;    // bad arguments or unreadable files

// Runs the `typecase` command line. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// One RFC-4180 field: quoted when it holds a comma, quote or line break.
std::string csv_field(const std::string& value);

}  // namespace typecase
